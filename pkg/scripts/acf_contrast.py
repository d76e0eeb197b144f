"""Compare alpha autocorrelations of the collapsed and full Gibbs samplers on Setting 1.

Usage: python scripts/acf_contrast.py [--seeds 0 1 2 3 4] [--n-iter 3000]
"""
import argparse

from lcprobit.experiments import acf_contrast


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n-iter", type=int, default=3000)
    ap.add_argument("--burn-in", type=int, default=500)
    args = ap.parse_args()
    for seed in args.seeds:
        r = acf_contrast(seed, args.n_iter, args.burn_in)
        for k in range(r.collapsed.shape[0]):
            print(f"seed {seed} alpha_{k + 1}: collapsed lag1 {r.collapsed[k, 1]:.3f} "
                  f"lag5 {r.collapsed[k, 5]:.3f} | full lag1 {r.full[k, 1]:.3f} "
                  f"lag5 {r.full[k, 5]:.3f}")


if __name__ == "__main__":
    main()
