"""Wall-time overhead of eigenvector augmentation on DOMINANT across feature widths.

The eigen solve is nearly free; most of the overhead is training on t extra
input columns, so the relative cost shrinks as the base feature width d grows.

    python3 scripts/overhead.py --d 32 128 256 500
"""
import argparse

import numpy as np

from neigad.alloc import pin_allocator
from neigad.metrics import overhead_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--degree", type=float, default=10.0)
    ap.add_argument("--t", type=int, default=10)
    ap.add_argument("--d", type=int, nargs="+", default=[32, 128, 256, 500])
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    pin_allocator()

    print("   d  vanilla_s  augmented_s  eigen_s  overhead")
    for d in args.d:
        r = overhead_probe(args.n, args.degree, args.t, d, runs=args.runs, epochs=args.epochs)
        print(f"{d:4d}  {np.median(r.vanilla_seconds):9.2f}  {np.median(r.augmented_seconds):11.2f}  "
              f"{np.median(r.eigen_seconds):7.3f}  {100 * r.relative:7.1f}%")


if __name__ == "__main__":
    main()
