"""Benchmark the jitted kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from pseudolabel._accel import build_jit_kernels, numpy_kernels


def bench(func, *args, n_warmup=2, n_iter=5):
    for _ in range(n_warmup):
        func(*args)
    start = time.perf_counter()
    for _ in range(n_iter):
        func(*args)
    return (time.perf_counter() - start) / n_iter * 1000.0  # ms


def random_boxes(rng, n, span=512.0):
    x1 = rng.uniform(0, span * 0.8, (n, 2))
    wh = rng.uniform(4, span * 0.2, (n, 2))
    return np.concatenate([x1, x1 + wh], axis=1)


def main():
    try:
        jit = build_jit_kernels()
    except ImportError:
        print("numba not installed; nothing to compare")
        return

    rng = np.random.default_rng(0)
    cases = []

    a = random_boxes(rng, 1500)
    b = random_boxes(rng, 1500)
    cases.append(("pairwise_iou 1500x1500", "pairwise_iou", (a, b)))
    cases.append(("pairwise_giou 1500x1500", "pairwise_giou", (a, b)))

    fmap = rng.standard_normal((64, 96, 96))
    cases.append(
        ("roi_align 64ch 7x7 grid", "roi_align_box", (fmap, 3.2, 5.1, 80.4, 77.9, 7, 7, 4))
    )

    cost = rng.uniform(0, 10, (200, 200))
    cases.append(("hungarian 200x200", "solve_square_assignment", (cost,)))

    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for label, name, args in cases:
        t_np = bench(getattr(numpy_kernels, name), *args)
        t_nb = bench(getattr(jit, name), *args)
        ref = getattr(numpy_kernels, name)(*args)
        fast = getattr(jit, name)(*args)
        if not np.allclose(ref, fast, atol=1e-12):
            print(f"WARNING: {name} paths disagree")
        print(f"{label:<28}{t_np:>12.2f}{t_nb:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
