import numpy as np
import pytest

from panoseg import _accel
from panoseg.cloud import PointCloud, SegmentedCloud

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def make_cloud(positions, colors=None, labels=None):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if colors is None:
        colors = np.zeros((positions.shape[0], 3), dtype=np.uint8)
    return SegmentedCloud(PointCloud(positions, colors), labels)


def random_cloud(rng, n, scale=1.0, labels=0):
    pos = rng.normal(size=(n, 3)) * scale
    col = rng.integers(0, 256, size=(n, 3), dtype=np.uint8)
    lab = rng.integers(0, labels + 1, size=n) if labels else None
    return make_cloud(pos, col, lab)


# acceptance criteria report one line each; printed at the end of the run
ACCEPTANCE_LINES = []


def report_criterion(number, title, passed, detail):
    line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
