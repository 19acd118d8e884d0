"""Time the numba and numpy flavours of each hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--points N] [--width W] [--repeat R]
"""

import argparse
import time

import numpy as np

from panoseg import _accel, kernels
from panoseg.projection import ProjectionSpec, project_points
from panoseg.segmenter import grid_edges


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=1_000_000)
    ap.add_argument("--width", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    w, h = args.width, args.width // 2

    pos = rng.normal(size=(args.points, 3)) * 10
    u, v, r, valid = project_points(pos, ProjectionSpec((0, 0, 0), w, h))
    pix = np.where(valid, v * w + u, -1)
    occupied = rng.random((h, w)) < 0.3
    seg_h, seg_w = h // 4, w // 4
    img = (rng.integers(0, 6, (seg_h // 8, seg_w // 8, 3)) * 40).astype(np.uint8)
    img = img.repeat(8, axis=0).repeat(8, axis=1)
    a, b, wt = grid_edges(img)

    cases = [
        (f"zbuffer ({args.points} pts, {w}x{h})", lambda be: kernels.zbuffer(pix, r, w * h, be)),
        (f"nearest_occupied ({w}x{h}, r=2)", lambda be: kernels.nearest_occupied(occupied, 2, be)),
        (f"graph_merge ({img.shape[1]}x{img.shape[0]})",
         lambda be: kernels.graph_merge(img.shape[0] * img.shape[1], a, b, wt, 100.0, 50, be)),
    ]
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"threads: {_accel.set_threads(0)}")
    print(f"{'kernel':42s} " + " ".join(f"{be:>10s}" for be in backends) + "   speedup  equal")
    for name, fn in cases:
        if "numba" in backends:
            fn("numba")  # compile outside the timing
        results = {be: best_of(lambda: fn(be), args.repeat) for be in backends}
        cols = " ".join(f"{results[be][0]:9.3f}s" for be in backends)
        if len(backends) == 2:
            speedup = results["numpy"][0] / results["numba"][0]
            eq = same(results["numpy"][1], results["numba"][1])
            print(f"{name:42s} {cols}   {speedup:6.1f}x  {eq}")
        else:
            print(f"{name:42s} {cols}")


if __name__ == "__main__":
    main()
