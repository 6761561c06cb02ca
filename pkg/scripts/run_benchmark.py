"""Vanilla vs eigenvector-augmented ROC-AUC and score gap on the synthetic benchmark.

    python3 scripts/run_benchmark.py --seeds 0 1 2 3 4 --t 4
"""
import argparse

import numpy as np

from neigad.graph import make_benchmark
from neigad.alloc import pin_allocator
from neigad.models import KINDS, TrainConfig, run_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--models", nargs="+", default=list(KINDS), choices=KINDS)
    ap.add_argument("--t", type=int, default=4)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    pin_allocator()

    print("model     seed  vanilla  augmented   delta   gap_v   gap_a")
    for kind in args.models:
        deltas, gap_wins = [], 0
        for seed in args.seeds:
            data = make_benchmark(n=args.n, seed=seed)
            base = TrainConfig(model=kind, seed=seed, epochs=args.epochs)
            aug = TrainConfig(model=kind, seed=seed, epochs=args.epochs, t=args.t, eigen_scale="unit_rms")
            comp = run_comparison(data, base, aug, f"sbm-{seed}")
            v, a = comp.vanilla, comp.neigad
            deltas.append(comp.delta)
            gap_wins += a.normalized_gap > v.normalized_gap
            print(f"{kind:9s} {seed:4d}  {v.roc_auc:.4f}   {a.roc_auc:.4f}  {comp.delta:+.4f}  "
                  f"{v.normalized_gap:.4f}  {a.normalized_gap:.4f}")
        wins = sum(d > 0 for d in deltas)
        print(f"{kind:9s} mean delta {np.mean(deltas):+.4f}, AUC wins {wins}/{len(deltas)}, "
              f"gap wins {gap_wins}/{len(deltas)}\n")


if __name__ == "__main__":
    main()
