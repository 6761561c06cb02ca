"""Eigen-solve time against graph size at fixed t and average degree, with the log-log slope.

    python3 scripts/scaling_probe.py --sizes 1000 2000 4000 8000 16000
"""
import argparse

from neigad.metrics import scaling_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000])
    ap.add_argument("--t", type=int, default=10)
    ap.add_argument("--degree", type=float, default=10.0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    args = ap.parse_args()

    res = scaling_probe(args.sizes, t=args.t, avg_degree=args.degree, seeds=args.seeds)
    for n, s in zip(res.sizes, res.median_seconds):
        print(f"n={n:7d}  {1e3 * s:8.2f} ms")
    print(f"log-log slope {res.slope:.3f}")


if __name__ == "__main__":
    main()
