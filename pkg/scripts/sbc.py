"""Simulation-based calibration of the collapsed sampler on a small two-class model.

Usage: python scripts/sbc.py [--reps 50] [--n 80] [--seed 0]
"""
import argparse

import numpy as np

from lcprobit.experiments import rank_uniformity_pvalues, sbc_ranks


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=50)
    ap.add_argument("--n", type=int, default=80)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bins", type=int, default=5)
    args = ap.parse_args()
    names, ranks = sbc_ranks(args.reps, args.n, seed=args.seed)
    pvals = rank_uniformity_pvalues(ranks, n_bins=args.bins)
    edges = np.linspace(0, 100, args.bins + 1)
    for nm, col, p in zip(names, ranks.T, pvals):
        counts, _ = np.histogram(col, bins=edges)
        print(f"{nm:8s} bin counts {counts.tolist()}  chi2 p = {p:.3f}")


if __name__ == "__main__":
    main()
