"""Reusable experiment drivers: simulation recovery, sampler-efficiency
contrast, simulation-based calibration and generator class means.

Each driver is a pure function of its arguments (seeds included) and returns
plain data so that scripts and tests can share it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .inference import autocorrelation, summarize
from .model import Dataset, PriorSpec
from .samplers import RunConfig, relabel, run_collapsed_gibbs, run_full_gibbs
from .simulate import builtin_setting, generate


def true_flat(spec) -> dict:
    """True values keyed like the columns of ``PosteriorSample.flat``."""
    out = {f"alpha_{k + 1}": v for k, v in enumerate(spec.alpha_true)}
    for s in range(2):
        out.update({f"beta{s + 1}_{k + 1}": v for k, v in enumerate(spec.beta_true[s])})
    out.update({f"sigma2_{s + 1}": v for s, v in enumerate(spec.sigma2_true)})
    return out


# ---------------------------------------------------------------------------
# simulation recovery

@dataclass
class RecoveryResult:
    setting: int
    rows: list  # (name, truth, mean, ci68, ci95)

    def misses(self, level: str) -> list:
        k = {"68": 3, "95": 4}[level]
        return [r[0] for r in self.rows if not r[k][0] <= r[1] <= r[k][1]]

    def mean_width(self, prefix: str, level: str = "68") -> float:
        k = {"68": 3, "95": 4}[level]
        return float(np.mean([r[k][1] - r[k][0] for r in self.rows if r[0].startswith(prefix)]))


def simulation_recovery(setting: int, data_seed: int = 0, chain_seed: int = 0,
                        n_iter: int = 11000, burn_in: int = 1000) -> RecoveryResult:
    """Fit one simulated data set with the collapsed sampler and tabulate intervals."""
    spec = builtin_setting(setting, seed=data_seed)
    d = generate(spec).dataset
    sample = relabel(run_collapsed_gibbs(d, PriorSpec.default(d.p, d.q),
                                         RunConfig(n_iter, burn_in, seed=chain_seed)))
    table = summarize(sample).params
    rows = [(nm, v, table[nm].mean, table[nm].ci68, table[nm].ci95)
            for nm, v in true_flat(spec).items()]
    return RecoveryResult(setting, rows)


# ---------------------------------------------------------------------------
# sampler efficiency

@dataclass
class AcfContrast:
    seed: int
    collapsed: np.ndarray  # (p, max_lag + 1)
    full: np.ndarray


def acf_contrast(seed: int, n_iter: int = 3000, burn_in: int = 500, max_lag: int = 10,
                 setting: int = 1) -> AcfContrast:
    """Alpha ACFs of both samplers on one Setting data set (same seed for data and chains)."""
    d = generate(builtin_setting(setting, seed=seed)).dataset
    prior = PriorSpec.default(d.p, d.q)
    cfg = RunConfig(n_iter, burn_in, seed=seed)
    acfs = []
    for runner in (run_collapsed_gibbs, run_full_gibbs):
        s = relabel(runner(d, prior, cfg))
        acfs.append(np.array([autocorrelation(s.alpha[:, k], max_lag) for k in range(d.p)]))
    return AcfContrast(seed, *acfs)


# ---------------------------------------------------------------------------
# simulation-based calibration

def _prior_draw(prior: PriorSpec, rng):
    alpha = rng.multivariate_normal(prior.alpha0, prior.A0)
    beta = np.array([rng.multivariate_normal(prior.beta0[s], prior.B0[s]) for s in range(2)])
    sigma2 = stats.invgamma(prior.v / 2, scale=prior.d / 2).rvs(2, random_state=rng)
    return alpha, beta, sigma2


def _ordered(alpha, beta):
    """Apply the intercept-ordering relabel rule to a single parameter value."""
    if beta[0, 0] < beta[1, 0]:
        return -alpha, beta[::-1]
    return alpha, beta


def sbc_ranks(n_rep: int = 50, n: int = 80, n_draws: int = 99, thin: int = 10,
              burn_in: int = 200, seed: int = 0):
    """Rank of each truth among thinned, relabeled posterior draws.

    Returns (names, ranks) with ranks in ``0..n_draws`` of shape (n_rep, k).
    Truth and draws go through the same ordering map, so the ranks of the
    ordered functional are uniform when the sampler is correct.
    """
    root = np.random.SeedSequence(seed)
    p, q = 2, 2
    prior = PriorSpec.default(p, q)
    names = [f"alpha_{k + 1}" for k in range(p)] + \
            [f"beta{s + 1}_{k + 1}" for s in range(2) for k in range(q)]
    ranks = np.empty((n_rep, len(names)), dtype=int)
    for r, child in enumerate(root.spawn(n_rep)):
        rng = np.random.default_rng(child)
        alpha, beta, sigma2 = _prior_draw(prior, rng)
        W = np.column_stack([np.ones(n), rng.standard_normal(n)])
        X = np.column_stack([np.ones(n), rng.standard_normal(n)])
        s = np.where(W @ alpha + rng.standard_normal(n) > 0, 1, 0)
        z = np.einsum("ij,ij->i", X, beta[s]) + np.sqrt(sigma2[s]) * rng.standard_normal(n)
        y = np.where(z > 1, 1, np.where(z > 0, 2, 3))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            d = Dataset(y, X, W)
        cfg = RunConfig(burn_in + n_draws * thin, burn_in, seed=int(child.generate_state(1)[0]))
        post = relabel(run_collapsed_gibbs(d, prior, cfg))
        a_true, b_true = _ordered(alpha, beta)
        truth = np.concatenate([a_true, b_true.ravel()])
        draws = np.column_stack([post.alpha, post.beta.reshape(post.G, -1)])[thin - 1::thin]
        ranks[r] = (draws < truth).sum(axis=0)
    return names, ranks


def rank_uniformity_pvalues(ranks, n_draws: int = 99, n_bins: int = 5) -> np.ndarray:
    """Chi-square p-value per column for ranks in ``0..n_draws``."""
    edges = np.linspace(0, n_draws + 1, n_bins + 1)
    out = []
    for col in ranks.T:
        counts, _ = np.histogram(col, bins=edges)
        out.append(stats.chisquare(counts).pvalue)
    return np.array(out)


# ---------------------------------------------------------------------------
# generator class means

def average_class_means(setting: int = 1, n_seeds: int = 50):
    """Within-class mean utilities x'beta_s averaged over generator seeds."""
    means = np.array([generate(builtin_setting(setting, seed=k)).class_cond_means
                      for k in range(n_seeds)])
    return means.mean(axis=0)
