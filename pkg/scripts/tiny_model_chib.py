"""Chib marginal likelihood on the tiny model (n=40, p=q=1) against grid quadrature.

Usage: python scripts/tiny_model_chib.py [--seeds 0 1 2 3 4]
"""
import argparse
import sys
from pathlib import Path

from lcprobit.comparison import chib_marginal_likelihood
from lcprobit.model import PriorSpec
from lcprobit.samplers import RunConfig, relabel, run_collapsed_gibbs
from lcprobit.simulate import SimSpec, generate

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from oracles import TinyModelOracle  # noqa: E402


def tiny_dataset(seed, n=40):
    spec = SimSpec(alpha_true=[0.3], beta_true=[[1.5], [-0.5]], sigma2_true=[0.3, 0.3], n=n,
                   x_means=(), x_vars=(), seed=seed)
    return generate(spec).dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n-iter", type=int, default=17600)
    args = ap.parse_args()
    prior = PriorSpec.default(1, 1)
    for seed in args.seeds:
        d = tiny_dataset(seed)
        cfg = RunConfig(args.n_iter, args.n_iter // 11, seed=seed)
        res = chib_marginal_likelihood(d, prior, cfg, relabel(run_collapsed_gibbs(d, prior, cfg)))
        oracle = TinyModelOracle(d.y, prior, n_grid=120).log_ml()
        print(f"seed {seed}: chib {res.log_ml:.4f} (MC se {res.mc_se:.3f})  "
              f"quadrature {oracle:.4f}  diff {res.log_ml - oracle:+.4f}")


if __name__ == "__main__":
    main()
