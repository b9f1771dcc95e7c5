"""Time each hot kernel in both flavors: numba @njit vs the pure-numpy fallback.

Run from the repo root:

    python3 benchmarks/bench_kernels.py [--repeats N]

Leave LOOPFORGE_NO_NUMBA unset so both flavors are importable; without numba
only the numpy column is shown.  Each timing is the best of N runs after one
untimed warmup call (which also absorbs jit compilation).
"""

import argparse
import time

import numpy as np

import loopforge._kernels as kernels
from loopforge.meshes import cylinder_mesh


def build_workloads():
    rng = np.random.default_rng(0)

    cyl = cylinder_mesh(0.3, 0.0, 1.0, segments=512, axis=1)
    dist = cyl.vertices[:, 1] - 0.5
    dist[dist == 0.0] = 1e-12

    ang = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    poly = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    queries = rng.uniform(-1.5, 1.5, size=(20_000, 2))

    cloud_a = rng.standard_normal((2048, 3))
    cloud_b = rng.standard_normal((2048, 3))

    return [
        (
            "face_segments",
            f"{cyl.faces.shape[0]} faces",
            (cyl.vertices, cyl.faces, dist),
            kernels._face_segments_np,
            "_face_segments_nb",
        ),
        (
            "points_in_polygon",
            "64-gon x 20k pts",
            (poly, queries, 1e-12),
            kernels._points_in_polygon_np,
            "_points_in_polygon_nb",
        ),
        (
            "chamfer_sq",
            "2048 x 2048 pts",
            (cloud_a, cloud_b),
            kernels._chamfer_sq_np,
            "_chamfer_sq_nb",
        ),
    ]


def best_of(fn, args, repeats):
    fn(*args)  # warmup; first numba call compiles
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    header = f"{'kernel':<20} {'workload':<20} {'numpy ms':>10}"
    if kernels.HAS_NUMBA:
        header += f" {'numba ms':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))

    for name, workload, call_args, np_fn, nb_attr in build_workloads():
        t_np = best_of(np_fn, call_args, args.repeats)
        line = f"{name:<20} {workload:<20} {t_np * 1e3:>10.3f}"
        if kernels.HAS_NUMBA:
            t_nb = best_of(getattr(kernels, nb_attr), call_args, args.repeats)
            line += f" {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x"
        print(line)

    if not kernels.HAS_NUMBA:
        print("\nnumba flavor unavailable (not importable or LOOPFORGE_NO_NUMBA set)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
