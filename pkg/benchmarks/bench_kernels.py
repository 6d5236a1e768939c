"""Compiled vs pure-Python kernel timings on desk-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on the same inputs under both backends; outputs are checked
for agreement before timings are reported.
"""
import argparse
import time

import numpy as np

from kpgan import kernels
from kpgan.data import ShapeSpec, generate
from kpgan.geometry import estimate_lrfs, radius_neighbors_all
from kpgan.geometry.sdv import TRUNCATE, kernel_sigma


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-5, atol=1e-6)


def cases(seed=0):
    pc = generate(ShapeSpec.random("table", seed))
    pts = pc.points
    rng = np.random.default_rng(seed)
    r, w = 0.3, 16
    indptr, indices = radius_neighbors_all(pts, r)
    rot, valid = estimate_lrfs(pts, r)
    sub = np.arange(0, len(pts), 8)                 # 256 centres
    rows = np.repeat(sub, np.diff(indptr)[sub])
    idx = np.concatenate([indices[indptr[c]:indptr[c + 1]] for c in sub])
    local = np.einsum("mi,mij->mj", pts[idx] - pts[rows], rot[rows])
    ptr = np.concatenate([[0], np.cumsum(np.diff(indptr)[sub])]).astype(np.int64)
    xp = rng.normal(size=(64, 8, 10, 10, 10)).astype(np.float32)
    cols = rng.normal(size=(64, 8 * 27, 512)).astype(np.float32)
    scores = rng.random(len(pts))
    return {
        "radius_neighbors_all": lambda k: k.radius_neighbors_all(pts, r),
        "nearest_neighbor": lambda k: k.nearest_neighbor(pts[::2] + 0.01, pts),
        "sdv_splat": lambda k: k.sdv_splat(local, ptr, w, r, kernel_sigma(r, w), TRUNCATE),
        "greedy_nms": lambda k: k.greedy_nms(pts, scores, 0.1, 0.0, valid),
        "im2col3d": lambda k: k.im2col3d(xp, (3, 3, 3), (1, 1, 1), (8, 8, 8)),
        "col2im3d": lambda k: k.col2im3d(cols, xp.shape, (3, 3, 3), (1, 1, 1), (8, 8, 8)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    impls = kernels.implementations()
    if impls["compiled"] is None:
        print("compiled kernels not built; run `python3 setup.py build_ext --inplace`")
        return 1
    print(f"{'kernel':<22}{'python [ms]':>12}{'compiled [ms]':>15}{'speedup':>9}  agree")
    for name, fn in cases().items():
        t_py, out_py = best_of(lambda: fn(impls["python"]), args.repeat)
        t_c, out_c = best_of(lambda: fn(impls["compiled"]), args.repeat)
        print(f"{name:<22}{1e3 * t_py:>12.1f}{1e3 * t_c:>15.1f}{t_py / t_c:>8.1f}x  "
              f"{'yes' if same(out_py, out_c) else 'NO'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
