"""Posterior summaries, MCMC diagnostics, average category probabilities and
covariate effects."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import N_CLASSES, ContractError, Dataset, DomainError, ordinal_class_cond_probs
from .samplers import PosteriorSample

# equal-tailed coverage of +-1 and +-2 standard deviations of a normal
COVERAGE_1SD = 0.6827
COVERAGE_2SD = 0.9545
MAX_LAG = 40


def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Biased sample ACF at lags 0..max_lag (lag 0 is exactly 1)."""
    x = np.asarray(series, dtype=float)
    G = x.shape[0]
    if G <= max_lag:
        raise ContractError(f"series of length {G} too short for lag {max_lag}")
    x = x - x.mean()
    var = x @ x
    if var <= 0:
        raise DomainError("autocorrelation of a constant series is undefined")
    nfft = 1 << int(np.ceil(np.log2(2 * G)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    acf = acov / var
    acf[0] = 1.0
    return acf


def effective_sample_size(series) -> float:
    """G / (1 + 2 sum rho_k), truncated by Geyer's initial positive sequence."""
    x = np.asarray(series, dtype=float)
    G = x.shape[0]
    rho = autocorrelation(x, G - 1)
    tau = -1.0
    for m in range(0, G // 2):
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < G else 0.0)
        if pair <= 0:
            break
        tau += 2.0 * pair
    ess = G / max(tau, 1e-12)
    return float(min(ess, G))


@dataclass
class ParamSummary:
    name: str
    mean: float
    sd: float
    ci68: tuple
    ci95: tuple
    ess: float | None
    acf: list | None

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "ci68": list(self.ci68),
                "ci95": list(self.ci95), "ess": self.ess, "acf": self.acf}


@dataclass
class SummaryTable:
    params: dict
    G: int
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name) -> ParamSummary:
        return self.params[name]

    def to_dict(self) -> dict:
        return {
            "G": self.G,
            "interval_method": "equal-tailed posterior quantiles",
            "coverage": {"ci68": COVERAGE_1SD, "ci95": COVERAGE_2SD},
            "parameters": {k: v.to_dict() for k, v in self.params.items()},
            **self.meta,
        }


def _interval(x, cover):
    tail = 0.5 * (1.0 - cover)
    lo, hi = np.quantile(x, [tail, 1.0 - tail])
    return float(lo), float(hi)


def summarize_matrix(names, values, max_lag=MAX_LAG) -> SummaryTable:
    G = values.shape[0]
    if G < 100:
        raise ContractError(f"need at least 100 draws to summarize, got {G}")
    out = {}
    for k, name in enumerate(names):
        x = values[:, k]
        if np.ptp(x) == 0:
            # constant parameter: exact moments, no autocorrelation defined
            ess, acf, mean, sd = None, None, float(x[0]), 0.0
        else:
            ess = effective_sample_size(x)
            acf = autocorrelation(x, min(max_lag, G - 1))[1:].tolist()
            mean, sd = float(x.mean()), float(x.std(ddof=1))
        out[name] = ParamSummary(name, mean, sd,
                                 _interval(x, COVERAGE_1SD), _interval(x, COVERAGE_2SD),
                                 ess, acf)
    return SummaryTable(out, G)


def summarize(sample: PosteriorSample) -> SummaryTable:
    names, values = sample.flat()
    table = summarize_matrix(names, values)
    table.meta = {"sampler": sample.sampler, "relabeled": sample.relabeled,
                  "swap_fraction": sample.swap_fraction,
                  "accept_rate_alpha": sample.accept_rate_alpha}
    return table


# ---------------------------------------------------------------------------
# average class-conditional category probabilities

@dataclass
class AvgProbDistribution:
    draws: np.ndarray  # (G, 2, J): per-draw n-averages

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


def _class_probs(X, sample, g, s):
    return ordinal_class_cond_probs(X, sample.beta[g, s], np.sqrt(sample.sigma2[g, s]),
                                    sample.draw(g).cutpoints.gamma(s))


def average_category_probs(sample: PosteriorSample, data: Dataset) -> AvgProbDistribution:
    if sample.beta.shape[2] != data.q or sample.J != data.J:
        raise ContractError("posterior sample and dataset dimensions disagree")
    out = np.empty((sample.G, N_CLASSES, data.J))
    for g in range(sample.G):
        for s in range(N_CLASSES):
            out[g, s] = _class_probs(data.X, sample, g, s).mean(axis=0)
    return AvgProbDistribution(out)


def overlap_mass(a, b, bins=200) -> float:
    """Shared probability mass of two samples' histograms on a common grid."""
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi <= lo:
        return 1.0
    edges = np.linspace(lo, hi, bins + 1)
    ha = np.histogram(a, edges)[0] / a.size
    hb = np.histogram(b, edges)[0] / b.size
    return float(np.minimum(ha, hb).sum())


# ---------------------------------------------------------------------------
# covariate effects

@dataclass
class CovariateEffect:
    k: int
    name: str
    perturbation: dict
    draws: np.ndarray  # (G, 2, J): per-draw n-averaged differences

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)

    def quantiles(self, probs=(0.025, 0.5, 0.975)) -> np.ndarray:
        return np.quantile(self.draws, probs, axis=0)


def default_perturbation(column) -> tuple:
    """(x_dagger, x_ddagger): +1 sample SD, or 0 -> 1 for binary columns."""
    column = np.asarray(column, dtype=float)
    if np.all(np.isin(column, (0.0, 1.0))):
        return np.ones_like(column), np.zeros_like(column), {"kind": "binary", "from": 0, "to": 1}
    sd = column.std(ddof=1)
    return column + sd, column.copy(), {"kind": "sd", "shift": float(sd)}


def covariate_effect(sample: PosteriorSample, data: Dataset, k: int,
                     perturbation=None) -> CovariateEffect:
    """Average change in class-conditional category probabilities when x_k moves.

    ``perturbation`` is None (default rule) or a pair of length-n arrays
    ``(x_dagger, x_ddagger)``.
    """
    if not 0 < k < data.q:
        raise ContractError(f"covariate index {k} invalid (intercept is column 0, q={data.q})")
    if perturbation is None:
        hi, lo, desc = default_perturbation(data.X[:, k])
    else:
        hi, lo = (np.broadcast_to(np.asarray(v, float), (data.n,)) for v in perturbation)
        desc = {"kind": "custom"}
    X_hi = data.X.copy()
    X_lo = data.X.copy()
    X_hi[:, k] = hi
    X_lo[:, k] = lo
    out = np.empty((sample.G, N_CLASSES, data.J))
    for g in range(sample.G):
        for s in range(N_CLASSES):
            out[g, s] = (_class_probs(X_hi, sample, g, s)
                         - _class_probs(X_lo, sample, g, s)).mean(axis=0)
    name = data.x_names[k - 1] if len(data.x_names) >= k else f"x{k}"
    return CovariateEffect(k, name, desc, out)
