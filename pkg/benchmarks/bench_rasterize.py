"""Benchmark: compiled rasterization kernels vs the pure-numpy fallback.

Generates a synthetic splat population with scene-like statistics (splat
radii of a few pixels, moderate per-tile overlap), then times forward and
backward passes through both backends and reports the speedup. Also checks
that the forward passes agree bit-for-bit, which the fallback guarantees.

Run:  python benchmarks/bench_rasterize.py [--n 4000] [--size 256] [--reps 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from motiongs._kernels import available_backends, get_backend
from motiongs.render import TILE_SIZE, bin_tiles


def make_workload(n, size, seed=0):
    rng = np.random.default_rng(seed)
    mean = rng.uniform(size * 0.15, size * 0.85, (n, 2))
    # anisotropic covariances with ~2-4 px standard deviations
    theta = rng.uniform(0, np.pi, n)
    s1 = rng.uniform(1.5, 4.0, n) ** 2
    s2 = rng.uniform(1.5, 4.0, n) ** 2
    ct, st = np.cos(theta), np.sin(theta)
    a = ct * ct * s1 + st * st * s2
    b = ct * st * (s1 - s2)
    c = st * st * s1 + ct * ct * s2
    cov = np.ascontiguousarray(np.stack([a, b, c], axis=1))
    rgb = rng.uniform(0, 1, (n, 3))
    alpha = rng.uniform(0.3, 0.95, n)
    background = np.array([0.0, 0.0, 0.0])
    lam = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    radius = 3.0 * np.sqrt(lam) + 1.0
    tile_ids, tile_offsets = bin_tiles(mean, radius, size, size, TILE_SIZE)
    return (mean, cov, rgb, alpha, background, size, size,
            tile_ids, tile_offsets, TILE_SIZE)


def bench(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000, help="splat count")
    ap.add_argument("--size", type=int, default=256, help="image side")
    ap.add_argument("--reps", type=int, default=5, help="timing repetitions")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    names = available_backends()
    print(f"backends: {', '.join(names)}")
    if len(names) < 2:
        print("compiled backend unavailable; nothing to compare")

    fwd_args = make_workload(args.n, args.size, args.seed)
    rng = np.random.default_rng(args.seed + 1)
    grad_img = np.ascontiguousarray(rng.normal(size=(args.size, args.size, 3)))
    grad_alpha = np.ascontiguousarray(rng.normal(size=(args.size, args.size)))
    print(f"workload: {args.n} splats, {args.size}x{args.size}, "
          f"{len(fwd_args[7])} tile pairs")

    results = {}
    for name in names:
        be = get_backend(name)
        t_f, out_f = bench(lambda: be.forward(*fwd_args), args.reps)
        t_b, out_b = bench(lambda: be.backward(*fwd_args, grad_img, grad_alpha),
                           args.reps)
        results[name] = (t_f, t_b, out_f, out_b)
        print(f"{name:8s} forward {t_f * 1e3:8.2f} ms   backward {t_b * 1e3:8.2f} ms")

    if "cython" in results and "numpy" in results:
        cf, cb = results["cython"][:2]
        nf, nb = results["numpy"][:2]
        print(f"speedup  forward {nf / cf:7.1f}x    backward {nb / cb:7.1f}x")
        img_c, alp_c = results["cython"][2]
        img_n, alp_n = results["numpy"][2]
        same = np.array_equal(img_c, img_n) and np.array_equal(alp_c, alp_n)
        print(f"forward outputs bit-identical: {same}")
        gmax = max(np.abs(gc - gn).max()
                   for gc, gn in zip(results["cython"][3], results["numpy"][3]))
        print(f"backward max abs difference:   {gmax:.3e}")


if __name__ == "__main__":
    main()
