"""Fit both simulation settings at default run lengths and print an interval table.

Usage: python scripts/simulation_study.py [--data-seed 0] [--chain-seed 0] [--n-iter 11000]
"""
import argparse
import json
import time

from lcprobit.experiments import simulation_recovery


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--chain-seed", type=int, default=0)
    ap.add_argument("--n-iter", type=int, default=11000)
    ap.add_argument("--burn-in", type=int, default=1000)
    ap.add_argument("--json", help="optional path for machine-readable results")
    args = ap.parse_args()
    results = {}
    for setting in (1, 2):
        t0 = time.perf_counter()
        res = simulation_recovery(setting, args.data_seed, args.chain_seed,
                                  args.n_iter, args.burn_in)
        print(f"\nSetting {setting}  ({time.perf_counter() - t0:.0f} s)")
        print(f"{'param':10s} {'true':>6s} {'mean':>7s} {'68.27% interval':>18s} "
              f"{'95.45% interval':>18s}")
        for nm, v, m, c68, c95 in res.rows:
            flag = "" if c68[0] <= v <= c68[1] else "  *"
            print(f"{nm:10s} {v:6.2f} {m:7.3f} [{c68[0]:6.3f},{c68[1]:6.3f}]  "
                  f"[{c95[0]:6.3f},{c95[1]:6.3f}]{flag}")
        print(f"misses: 68.27% {res.misses('68')}  95.45% {res.misses('95')}")
        print(f"mean 68.27% width, class-2 beta: {res.mean_width('beta2_'):.4f}")
        results[setting] = {"rows": res.rows, "miss68": res.misses("68"),
                            "miss95": res.misses("95"),
                            "width_beta2": res.mean_width("beta2_")}
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
