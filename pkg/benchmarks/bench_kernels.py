"""Timing comparison of the compiled and pure-python kernel backends.

Runs the same seeded workloads on both backends (results are bit-identical
by construction; this script reports wall time only) and prints a table.

    python3 benchmarks/bench_kernels.py [--repeat N] [--large]
"""

import argparse
import time

import numpy as np

from roadmend import backend
from roadmend.complete import CompletionParams, complete_image
from roadmend.raster import build_projection, rasterize, roi_from_mesh
from roadmend.synthetic import center_hole, random_mesh, stripe_image


def bench_rasterize():
    mesh = random_mesh(3, max_facets=1000)
    spec = build_projection(roi_from_mesh(mesh), gsd=0.03125)
    return lambda: rasterize(mesh, spec)


def bench_complete(size, hole):
    img = stripe_image(size=size)
    void = center_hole(size, hole)
    valid = np.ones((size, size), bool)
    params = CompletionParams(seed=0)
    return lambda: complete_image(img, valid, void,
                                  angles=(3 * np.pi / 4,), params=params)


def bench_energy():
    from roadmend.complete import gaussian_patch_weights
    img = np.ascontiguousarray(stripe_image(size=96))
    wint = gaussian_patch_weights(21, 21 / 4.0)
    dist = np.zeros((96, 96))
    nd = np.empty(0)

    def run():
        kern = backend.get_kernels()
        for k in range(2000):
            kern.eval_energy(img, wint, dist, 48, 48, 5 + k % 20, -7,
                             5e-4, 0.5, 144.0, nd, nd, False)
    return run


def time_best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3,
                    help="best-of-N timing (default 3)")
    ap.add_argument("--large", action="store_true",
                    help="add a 256px completion case (slow on python)")
    args = ap.parse_args()

    cases = [
        ("rasterize 1k facets", bench_rasterize()),
        ("eval_energy x2000", bench_energy()),
        ("complete 64px hole 12", bench_complete(64, 12)),
        ("complete 128px hole 24", bench_complete(128, 24)),
    ]
    if args.large:
        cases.append(("complete 256px hole 48", bench_complete(256, 48)))

    names = ("python", "compiled")
    avail = {}
    for n in names:
        try:
            backend.set_backend(n)
            backend.get_kernels()
            avail[n] = True
        except Exception as exc:
            print(f"backend {n!r} unavailable: {exc}")
            avail[n] = False
    backend.set_backend(None)

    print(f"{'case':<26} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for label, fn in cases:
        row = {}
        for n in names:
            if not avail[n]:
                row[n] = None
                continue
            backend.set_backend(n)
            fn()                           # warm up caches / JIT imports
            row[n] = time_best(fn, args.repeat)
        backend.set_backend(None)
        py = f"{row['python']:.3f}s" if row["python"] else "n/a"
        cy = f"{row['compiled']:.3f}s" if row["compiled"] else "n/a"
        if row["python"] and row["compiled"]:
            sp = f"{row['python'] / row['compiled']:.1f}x"
        else:
            sp = "n/a"
        print(f"{label:<26} {py:>10} {cy:>10} {sp:>8}")


if __name__ == "__main__":
    main()
