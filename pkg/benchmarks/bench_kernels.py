"""Time the numba kernels against their pure-numpy twins.

Run from the repository root:

    python benchmarks/bench_kernels.py

Each kernel is timed on sizes close to the real workloads (mode scoring
over a 4608-point grid, nearest-neighbour projection, covering-radius
probes). The numba path is warmed once before timing so compilation is
not counted. Results also cross-check that both paths agree, since a
fast wrong kernel is worse than no kernel.
"""

import time

import numpy as np

from svpose import _kernels, so3


def _timeit(fn, *args, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(11)
    grid = so3.build_grid(4608).quats
    queries = so3.random_quats(rng, 20000)
    targets = so3.random_quats(rng, 4)

    cases = [
        (
            "min_angle_sq_to_targets (20000 x 4608)",
            _kernels._min_angle_sq_np,
            _kernels._min_angle_sq_nb,
            (queries, grid),
        ),
        (
            "nearest_abs_dots (20000 x 4608)",
            _kernels._nearest_abs_dots_np,
            _kernels._nearest_abs_dots_nb,
            (queries, grid),
        ),
        (
            "min_max_abs_dot (10000 x 4608)",
            _kernels._min_max_abs_dot_np,
            _kernels._min_max_abs_dot_nb,
            (queries[:10000], grid),
        ),
        (
            "min_angle_sq_to_targets (20000 x 4 modes)",
            _kernels._min_angle_sq_np,
            _kernels._min_angle_sq_nb,
            (queries, targets),
        ),
    ]

    if not _kernels._HAVE_NUMBA:
        print("numba not importable; only the numpy path is available")

    print(f"{'kernel':<44} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, np_fn, nb_fn, args in cases:
        t_np = _timeit(np_fn, *args)
        if _kernels._HAVE_NUMBA:
            nb_fn(*args)  # warm the JIT cache
            t_nb = _timeit(nb_fn, *args)
            a = np_fn(*args)
            b = nb_fn(*args)
            if isinstance(a, tuple):
                assert all(np.allclose(x, y) for x, y in zip(a, b))
            else:
                assert np.allclose(a, b)
            print(f"{name:<44} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.2f}x")
        else:
            print(f"{name:<44} {t_np * 1e3:>8.2f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
