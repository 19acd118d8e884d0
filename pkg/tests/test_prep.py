import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from panoseg.cloud import Aabb, bounding_box
from panoseg.errors import ValidationError
from panoseg.prep import (RigidTransform, SorParams, apply_rigid_transform, crop_aabb,
                          estimate_scan_center, load_transform, parse_box, parse_center,
                          prepare, remove_statistical_outliers)

import oracles
from conftest import make_cloud, random_cloud


def test_identity_transform():
    seg = random_cloud(np.random.default_rng(0), 20, labels=3)
    assert apply_rigid_transform(seg, RigidTransform.identity()) == seg


def test_translation():
    out = apply_rigid_transform(make_cloud([(0, 0, 0)]), RigidTransform.from_translation((1, 0, 0)))
    assert out.positions.tolist() == [[1.0, 0.0, 0.0]]


def test_quarter_turn_about_z():
    out = apply_rigid_transform(make_cloud([(1, 0, 0)]), RigidTransform.about_z(math.pi / 2))
    assert np.allclose(out.positions, [[0, 1, 0]], atol=1e-12, rtol=0)


@pytest.mark.parametrize("rot", [
    np.diag([1.0, 1.0, -1.0]),       # reflection
    np.diag([1.0, 2.0, 1.0]),        # not orthonormal
    np.eye(3) + 1e-6,
])
def test_invalid_rotation_rejected(rot):
    with pytest.raises(ValidationError):
        RigidTransform(rot, (0, 0, 0))


def _random_transform(rng):
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return RigidTransform(q, rng.normal(size=3) * 10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transform_preserves_distances_and_inverts(seed):
    rng = np.random.default_rng(seed)
    t = _random_transform(rng)
    p = rng.normal(size=(30, 3)) * 5
    q = t.apply(p)
    dp = np.linalg.norm(p[:, None] - p[None], axis=2)
    dq = np.linalg.norm(q[:, None] - q[None], axis=2)
    assert np.allclose(dq, dp, rtol=1e-6, atol=0)
    assert np.abs(t.inverse().apply(q) - p).max() <= 1e-9
    assert np.abs(t.compose(t.inverse()).apply(p) - p).max() <= 1e-9


def test_transform_json(tmp_path):
    t = RigidTransform.about_z(0.3, (1, 2, 3))
    f = tmp_path / "t.json"
    import json
    f.write_text(json.dumps(t.to_dict()))
    back = load_transform(f)
    assert np.array_equal(back.rotation, t.rotation)
    assert np.array_equal(back.translation, t.translation)


def test_crop_examples():
    seg = make_cloud([(0.5, 0.5, 0.5), (2, 2, 2)])
    out, kept = crop_aabb(seg, Aabb((0, 0, 0), (1, 1, 1)))
    assert kept.tolist() == [0]
    assert len(out) == 1
    out, kept = crop_aabb(seg, Aabb((10, 10, 10), (11, 11, 11)))
    assert len(out) == 0 and kept.size == 0


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)),
                  elements=st.floats(-100, 100)))
def test_crop_to_own_bbox_keeps_everything(pos):
    seg = make_cloud(pos)
    out, kept = crop_aabb(seg, bounding_box(seg))
    assert out == seg
    assert kept.tolist() == list(range(len(seg)))


def test_sor_infinite_alpha_removes_nothing():
    seg = random_cloud(np.random.default_rng(1), 50)
    out, removed = remove_statistical_outliers(seg, SorParams(3, math.inf))
    assert removed.size == 0 and len(out) == 50


def test_sor_line_with_far_point():
    pts = [(x, 0, 0) for x in range(5)] + [(100, 0, 0)]
    # hand values: mean 2-NN distances 1.5, 1, 1, 1, 1.5, 96.5
    d = np.array([1.5, 1, 1, 1, 1.5, 96.5])
    assert d[5] > d.mean() + d.std() and (d[:5] < d.mean() + d.std()).all()
    assert oracles.sor_removed(pts, 2, 1.0) == [5]
    out, removed = remove_statistical_outliers(make_cloud(pts), SorParams(2, 1.0))
    assert removed.tolist() == [5]
    assert len(out) == 5


@pytest.mark.parametrize("seed", range(5))
def test_sor_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    pos = rng.normal(size=(200, 3))
    pos[rng.choice(200, 5, replace=False)] *= 6
    k = int(rng.integers(1, 10))
    alpha = float(rng.uniform(0, 3))
    _, removed = remove_statistical_outliers(make_cloud(pos), SorParams(k, alpha))
    assert removed.tolist() == oracles.sor_removed(pos, k, alpha)


def test_sor_rerun_has_no_hidden_state():
    rng = np.random.default_rng(9)
    pos = rng.normal(size=(150, 3))
    once, _ = remove_statistical_outliers(make_cloud(pos), SorParams(4, 1.0))
    _, removed = remove_statistical_outliers(once, SorParams(4, 1.0))
    assert removed.tolist() == oracles.sor_removed(once.positions, 4, 1.0)


def test_sor_k_out_of_range():
    with pytest.raises(ValidationError):
        remove_statistical_outliers(make_cloud(np.zeros((3, 3))), SorParams(3, 1.0))
    with pytest.raises(ValidationError):
        SorParams(0, 1.0)


def test_sor_independent_of_threads():
    seg = random_cloud(np.random.default_rng(4), 500)
    a = remove_statistical_outliers(seg, SorParams(6, 1.0), threads=1)[1]
    b = remove_statistical_outliers(seg, SorParams(6, 1.0), threads=4)[1]
    assert np.array_equal(a, b)


def test_scan_center_modes():
    assert estimate_scan_center(None, "origin").tolist() == [0, 0, 0]
    assert estimate_scan_center(make_cloud([(0, 0, 0), (2, 0, 0)]), "centroid").tolist() == [1, 0, 0]
    seg = make_cloud([(0, 0, 0), (1, 4, 2), (2, 0, 0)])
    assert estimate_scan_center(seg, "bbox_center").tolist() == [1, 2, 1]
    assert estimate_scan_center(seg, "explicit", (1, 2, 3)).tolist() == [1, 2, 3]
    with pytest.raises(ValidationError):
        estimate_scan_center(make_cloud(np.zeros((0, 3))), "centroid")


def test_parse_center_and_box():
    assert parse_center("origin") == ("origin", None)
    assert parse_center("bbox") == ("bbox_center", None)
    assert parse_center("1,2.5,-3") == ("explicit", (1.0, 2.5, -3.0))
    with pytest.raises(ValidationError):
        parse_center("1,2")
    assert parse_box("0,0,0,1,2,3") == Aabb((0, 0, 0), (1, 2, 3))
    with pytest.raises(ValidationError):
        parse_box("0,0,0,1,2")


def test_prepare_tracks_kept_indices():
    pts = [(x, 0, 0) for x in range(5)] + [(100, 0, 0), (50, 50, 50)]
    seg = make_cloud(pts, labels=list(range(1, 8)))
    out, kept, stats = prepare(seg, RigidTransform.from_translation((0, 0, 0)),
                               Aabb((-1, -1, -1), (200, 1, 1)), SorParams(2, 1.0))
    assert kept.tolist() == [0, 1, 2, 3, 4]
    assert out.labels.tolist() == [1, 2, 3, 4, 5]
    assert stats == {"input_points": 7, "cropped_points": 1, "sor_removed_points": 1,
                     "output_points": 5}
