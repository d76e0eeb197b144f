"""Synthetic data from the two-class ordinal probit with known ground truth."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ContractError, Cutpoints, Dataset, category_bounds

# fourth ordinal covariate: 0.8 is read as a variance
X4_VARIANCE = 0.8


@dataclass
class SimSpec:
    alpha_true: np.ndarray
    beta_true: np.ndarray  # (2, q)
    sigma2_true: np.ndarray  # (2,)
    n: int = 1200
    J: int = 3
    delta_true: np.ndarray | None = None  # (2, J-3)
    x_means: tuple = (0.5, 0.5, 0.0)
    x_vars: tuple = (1.0, 1.0, X4_VARIANCE)
    seed: int = 0
    name: str = "custom"

    def __post_init__(self):
        self.alpha_true = np.asarray(self.alpha_true, dtype=float)
        self.beta_true = np.asarray(self.beta_true, dtype=float)
        self.sigma2_true = np.asarray(self.sigma2_true, dtype=float)
        if self.delta_true is None:
            self.delta_true = np.zeros((2, self.J - 3))
        self.delta_true = np.asarray(self.delta_true, dtype=float).reshape(2, -1)
        q = 1 + len(self.x_means)
        if self.beta_true.shape != (2, q) or len(self.x_vars) != len(self.x_means):
            raise ContractError(f"beta_true must be (2, {q}) to match the covariate law")
        if np.any(self.sigma2_true <= 0):
            raise ContractError("sigma2_true must be positive")
        if self.delta_true.shape[1] != self.J - 3:
            raise ContractError("delta_true must have J - 3 columns")

    @property
    def p(self) -> int:
        return self.alpha_true.shape[0]

    @property
    def q(self) -> int:
        return self.beta_true.shape[1]

    def to_dict(self) -> dict:
        return {
            "name": self.name, "n": self.n, "J": self.J, "seed": self.seed,
            "alpha_true": self.alpha_true.tolist(),
            "beta_true": self.beta_true.tolist(),
            "sigma2_true": self.sigma2_true.tolist(),
            "delta_true": self.delta_true.tolist(),
            "x_means": list(self.x_means), "x_vars": list(self.x_vars),
            "x4_variance_convention": "variance",
        }


@dataclass
class SimOutput:
    dataset: Dataset
    s_true: np.ndarray
    z_true: np.ndarray
    class_cond_means: tuple
    spec: SimSpec = field(repr=False, default=None)


SETTINGS = {
    1: dict(alpha_true=[-0.3, 1.5],
            beta_true=[[0.6, -0.7, -0.6, 0.5], [0.1, 0.6, 0.2, 0.8]],
            sigma2_true=[0.25, 0.25]),
    2: dict(alpha_true=[-0.3, 1.5],
            beta_true=[[0.6, -0.6, -0.6, 0.5], [0.1, -0.1, -0.1, 0.8]],
            sigma2_true=[0.25, 0.25]),
}


def builtin_setting(setting_id: int, seed: int = 0, n: int = 1200) -> SimSpec:
    """True parameter values of the two reference simulation designs."""
    if setting_id not in SETTINGS:
        raise ContractError(f"unknown setting {setting_id!r}; choose 1 or 2")
    return SimSpec(n=n, seed=seed, name=f"setting{setting_id}", **SETTINGS[setting_id])


def generate(spec: SimSpec, rng=None) -> SimOutput:
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    n = spec.n
    W = np.column_stack([np.ones(n), rng.standard_normal((n, spec.p - 1))])
    cols = [np.ones(n)]
    for mu, var in zip(spec.x_means, spec.x_vars):
        cols.append(mu + np.sqrt(var) * rng.standard_normal(n))
    X = np.column_stack(cols)
    l = W @ spec.alpha_true + rng.standard_normal(n)
    s = np.where(l > 0, 2, 1)
    mean = np.einsum("ij,ij->i", X, spec.beta_true[s - 1])
    z = mean + np.sqrt(spec.sigma2_true[s - 1]) * rng.standard_normal(n)
    cut = Cutpoints(spec.delta_true)
    y = np.empty(n, dtype=np.int64)
    for c in (1, 2):
        edges = cut.edges(c - 1)
        m = s == c
        # category 1 is the top band
        band = np.searchsorted(edges, z[m], side="left") - 1
        y[m] = spec.J - band
    means = tuple(float(mean[s == c].mean()) if np.any(s == c) else float("nan")
                  for c in (1, 2))
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = Dataset(y, X, W, spec.J)
    return SimOutput(ds, s, z, means, spec)


def check_consistency(out: SimOutput) -> bool:
    """Every z_true lies in the band its y implies under the identification cut-points."""
    cut = Cutpoints(out.spec.delta_true)
    ok = True
    for c in (1, 2):
        m = out.s_true == c
        lo, hi = category_bounds(out.dataset.y[m], cut.edges(c - 1))
        ok &= bool(np.all((out.z_true[m] > lo) & (out.z_true[m] <= hi)))
    return ok
