"""Domain types and closed-form probabilities for the two-class ordinal probit.

Category convention: outcomes are coded 1..J with category 1 occupying the
*top* utility band and category J the bottom band, i.e. for J = 3

    y = 3  <=>  z <= 0,   y = 2  <=>  0 < z <= 1,   y = 1  <=>  z > 1.

Every class carries J - 1 cut-points with the first fixed at 0 and the last
fixed at 1; the interior ones are parameterized by unconstrained ``delta``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_ndtr, ndtr

N_CLASSES = 2


class ContractError(ValueError):
    """Inputs violate a documented precondition (dimensions, indices, ...)."""


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of an operation."""


# ---------------------------------------------------------------------------
# normal helpers

def log_band_prob(lo, hi):
    """log(Phi(hi) - Phi(lo)) for standardized bounds, stable in both tails.

    Infinite bounds are allowed. Broadcasts over arrays.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    upper = lo > 0
    # mirror into the lower tail where log_ndtr is accurate
    a = np.where(upper, -hi, lo)
    b = np.where(upper, -lo, hi)
    lb = log_ndtr(b)
    la = log_ndtr(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log1p(-np.exp(la - lb))
    return out


def log_normal_pdf_std(t):
    return -0.5 * np.square(t) - 0.5 * np.log(2.0 * np.pi)


def mvn_logpdf(x, mean, cov):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = x - np.asarray(mean, dtype=float)
    chol = np.linalg.cholesky(np.atleast_2d(cov))
    sol = np.linalg.solve(chol, diff)
    k = diff.shape[-1]
    return (-0.5 * sol @ sol - np.log(np.diag(chol)).sum()
            - 0.5 * k * np.log(2.0 * np.pi))


def invgamma_logpdf(x, shape, scale):
    from scipy.special import gammaln
    x = np.asarray(x, dtype=float)
    return (shape * np.log(scale) - gammaln(shape)
            - (shape + 1.0) * np.log(x) - scale / x)


# ---------------------------------------------------------------------------
# domain types

@dataclass
class Dataset:
    """Ordinal outcomes with ordinal-layer covariates X and class-layer W.

    Both design matrices include the leading intercept column.
    """

    y: np.ndarray
    X: np.ndarray
    W: np.ndarray
    J: int = 3
    x_names: list = field(default_factory=list)
    w_names: list = field(default_factory=list)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        if self.J < 3:
            raise ContractError(f"need J >= 3 categories, got {self.J}")
        n = self.y.shape[0]
        if self.X.shape[0] != n or self.W.shape[0] != n:
            raise ContractError(
                f"row mismatch: y has {n}, X has {self.X.shape[0]}, "
                f"W has {self.W.shape[0]}")
        if n and (self.y.min() < 1 or self.y.max() > self.J):
            raise ContractError(f"y must lie in 1..{self.J}")
        for name, M in (("X", self.X), ("W", self.W)):
            if n and not np.all(M[:, 0] == 1.0):
                raise ContractError(f"first column of {name} must be the intercept")
            if n and np.linalg.matrix_rank(M) < M.shape[1]:
                raise ContractError(f"{name} does not have full column rank")
        if not self.x_names:
            self.x_names = [f"x{k}" for k in range(1, self.q)]
        if not self.w_names:
            self.w_names = [f"w{k}" for k in range(1, self.p)]
        missing = sorted(set(range(1, self.J + 1)) - set(self.y.tolist()))
        if n and missing:
            warnings.warn(f"categories {missing} never observed", stacklevel=2)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return Dataset(self.y[idx], self.X[idx], self.W[idx], self.J,
                           list(self.x_names), list(self.w_names))


@dataclass
class PriorSpec:
    alpha0: np.ndarray
    A0: np.ndarray
    beta0: np.ndarray  # (2, q)
    B0: np.ndarray  # (2, q, q)
    v: float = 8.6
    d: float = 2.6
    delta0: np.ndarray | None = None  # (2, J-3)
    D0: np.ndarray | None = None  # (2, J-3, J-3)

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=float)
        self.A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        self.beta0 = np.atleast_2d(np.asarray(self.beta0, dtype=float))
        self.B0 = np.asarray(self.B0, dtype=float)
        if self.v <= 0 or self.d <= 0:
            raise DomainError("inverse-gamma hyperparameters v, d must be positive")
        mats = [self.A0, *self.B0]
        if self.D0 is not None:
            self.delta0 = np.asarray(self.delta0, dtype=float).reshape(N_CLASSES, -1)
            self.D0 = np.asarray(self.D0, dtype=float)
            if self.delta0.shape[1]:
                mats.extend(self.D0)
        for M in mats:
            if not np.allclose(M, M.T) or np.linalg.eigvalsh(M).min() <= 0:
                raise DomainError("prior covariance matrices must be SPD")
        self.A0_inv = np.linalg.inv(self.A0)
        self.B0_inv = np.linalg.inv(self.B0)

    @classmethod
    def default(cls, p: int, q: int, J: int = 3) -> "PriorSpec":
        """alpha ~ N(0, 3I), beta_s ~ N(0, I), sigma2_s ~ IG(4.3, 1.3), delta_s ~ N(0, I)."""
        m = J - 3
        return cls(
            alpha0=np.zeros(p), A0=3.0 * np.eye(p),
            beta0=np.zeros((N_CLASSES, q)),
            B0=np.stack([np.eye(q)] * N_CLASSES),
            v=8.6, d=2.6,
            delta0=np.zeros((N_CLASSES, m)),
            D0=np.stack([np.eye(m)] * N_CLASSES),
        )

    @property
    def exchangeable(self) -> bool:
        """True when both classes carry identical priors (label symmetry)."""
        same = (np.array_equal(self.beta0[0], self.beta0[1])
                and np.array_equal(self.B0[0], self.B0[1])
                and np.allclose(self.alpha0, 0.0))
        if self.D0 is not None and self.delta0.shape[1]:
            same = same and np.array_equal(self.delta0[0], self.delta0[1]) \
                and np.array_equal(self.D0[0], self.D0[1])
        return bool(same)

    def log_density(self, theta: "ParamDraw") -> float:
        out = mvn_logpdf(theta.alpha, self.alpha0, self.A0)
        for s in range(N_CLASSES):
            out += mvn_logpdf(theta.beta[s], self.beta0[s], self.B0[s])
            out += invgamma_logpdf(theta.sigma2[s], self.v / 2.0, self.d / 2.0)
            if theta.cutpoints.n_free:
                out += mvn_logpdf(theta.cutpoints.delta[s], self.delta0[s], self.D0[s])
        return float(out)


def cutpoints_from_delta(delta) -> np.ndarray:
    """Map free parameters to ordered cut-points ``0 = g_1 < ... < g_{J-1} = 1``.

    Each interior cut-point takes the fraction ``logistic(delta_j)`` of the
    remaining distance to the upper fixed point, so any finite delta yields a
    strictly increasing vector (up to double-precision resolution near 1).
    The remaining gap is carried multiplicatively to avoid cancellation.
    """
    delta = np.asarray(delta, dtype=float)
    gamma = [0.0]
    gap = 1.0  # 1 - g_j
    for dj in delta:
        low = gamma[-1] + gap * expit(dj)  # accurate for small cut-points
        gap *= expit(-dj)
        gamma.append(low if low < 0.5 else 1.0 - gap)
    gamma.append(1.0)
    return np.array(gamma)


def delta_from_cutpoints(gamma) -> np.ndarray:
    """Inverse of :func:`cutpoints_from_delta`: logit of each step's fraction."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 1 or gamma.size < 2 or gamma[0] != 0.0 or gamma[-1] != 1.0:
        raise DomainError("cut-points must start at 0 and end at 1")
    if np.any(np.diff(gamma) <= 0):
        raise DomainError("cut-points must be strictly increasing")
    step = np.diff(gamma[:-1])  # g_j - g_{j-1}
    rest = 1.0 - gamma[1:-1]  # 1 - g_j
    return np.log(step) - np.log(rest)


@dataclass
class Cutpoints:
    """Per-class cut-points stored through their free parameters ``delta``."""

    delta: np.ndarray  # (2, J-3)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float).reshape(N_CLASSES, -1)

    @classmethod
    def fixed(cls, J: int = 3) -> "Cutpoints":
        return cls(np.zeros((N_CLASSES, J - 3)))

    @property
    def J(self) -> int:
        return self.delta.shape[1] + 3

    @property
    def n_free(self) -> int:
        return self.delta.shape[1]

    def gamma(self, s: int) -> np.ndarray:
        return cutpoints_from_delta(self.delta[s])

    def edges(self, s: int) -> np.ndarray:
        """Band edges ``[-inf, g_1, ..., g_{J-1}, inf]`` for class s (0-based)."""
        return np.concatenate(([-np.inf], self.gamma(s), [np.inf]))


def category_bounds(y, edges):
    """Truncation region (lo, hi] of the latent utility for each category."""
    y = np.asarray(y)
    J = edges.size - 1
    band = J - y  # 0-based band index counted from the bottom
    return edges[band], edges[band + 1]


@dataclass
class ParamDraw:
    alpha: np.ndarray  # (p,)
    beta: np.ndarray  # (2, q)
    sigma2: np.ndarray  # (2,)
    cutpoints: Cutpoints

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        if np.any(self.sigma2 <= 0):
            raise DomainError("variances must be strictly positive")

    def swapped(self) -> "ParamDraw":
        """The observationally equivalent draw with class labels exchanged."""
        return ParamDraw(-self.alpha, self.beta[::-1].copy(), self.sigma2[::-1].copy(),
                         Cutpoints(self.cutpoints.delta[::-1].copy()))


@dataclass
class ChainState:
    params: ParamDraw
    z: np.ndarray
    u: np.ndarray  # labels in {1, 2}
    l: np.ndarray | None = None


# ---------------------------------------------------------------------------
# probabilities

def class_prob(w, alpha):
    """(Q_1, Q_2) with Q_2 = Phi(w'alpha)."""
    t = np.dot(w, alpha)
    return 1.0 - ndtr(t), ndtr(t)


def ordinal_class_cond_probs(x, beta_s, sigma_s, cutpoints_s) -> np.ndarray:
    """Category probabilities (index j-1 for category j) within one class.

    ``cutpoints_s`` is the class's ordered cut-point vector (length J-1).
    Accepts a single covariate row or a matrix of rows.
    """
    if not sigma_s > 0:
        raise DomainError(f"sigma must be positive, got {sigma_s}")
    edges = np.concatenate(([-np.inf], np.asarray(cutpoints_s, float), [np.inf]))
    mu = np.dot(x, beta_s)
    std = (edges[:, None] - np.atleast_1d(mu)[None, :]) / sigma_s
    logp = log_band_prob(std[:-1], std[1:])  # bands bottom..top
    probs = np.exp(logp)[::-1].T  # category 1 = top band
    return probs[0] if np.ndim(mu) == 0 else probs


def log_obs_class_probs(data: Dataset, beta, sigma2, cutpoints: Cutpoints, rows=None):
    """log P(y_i | s) for both classes; shape (n, 2)."""
    X, y = data.X, data.y
    if rows is not None:
        X, y = X[rows], y[rows]
    out = np.empty((y.shape[0], N_CLASSES))
    for s in range(N_CLASSES):
        lo, hi = category_bounds(y, cutpoints.edges(s))
        mu = X @ beta[s]
        sd = np.sqrt(sigma2[s])
        out[:, s] = log_band_prob((lo - mu) / sd, (hi - mu) / sd)
    return out


def mixture_outcome_probs(x, w, theta: ParamDraw) -> np.ndarray:
    q1, q2 = class_prob(w, theta.alpha)
    p1 = ordinal_class_cond_probs(x, theta.beta[0], np.sqrt(theta.sigma2[0]),
                                  theta.cutpoints.gamma(0))
    p2 = ordinal_class_cond_probs(x, theta.beta[1], np.sqrt(theta.sigma2[1]),
                                  theta.cutpoints.gamma(1))
    return np.asarray(q1)[..., None] * p1 + np.asarray(q2)[..., None] * p2


def _check_dims(data: Dataset, theta: ParamDraw):
    if theta.alpha.shape != (data.p,) or theta.beta.shape != (N_CLASSES, data.q):
        raise ContractError(
            f"parameter shapes alpha{theta.alpha.shape}, beta{theta.beta.shape} "
            f"do not match data (p={data.p}, q={data.q})")
    if theta.cutpoints.J != data.J:
        raise ContractError(f"cut-points are for J={theta.cutpoints.J}, data has J={data.J}")


def log_mixture_terms(t, logp):
    """Per-observation log[(1-Phi(t)) P1 + Phi(t) P2] from log P (n, 2)."""
    return np.logaddexp(log_ndtr(-t) + logp[:, 0], log_ndtr(t) + logp[:, 1])


def log_likelihood(data: Dataset, theta: ParamDraw) -> float:
    _check_dims(data, theta)
    logp = log_obs_class_probs(data, theta.beta, theta.sigma2, theta.cutpoints)
    return float(log_mixture_terms(data.W @ theta.alpha, logp).sum())


def log_posterior_kernel_alpha(alpha, beta, sigma2, cutpoints, data, prior) -> float:
    """log f(y | alpha, beta, sigma2) + log N(alpha; alpha0, A0)."""
    logp = log_obs_class_probs(data, beta, sigma2, cutpoints)
    return AlphaKernel(data.W, logp, prior).value(alpha)


class AlphaKernel:
    """Log kernel of alpha with the class-conditional likelihoods held fixed.

    Provides value and analytic gradient for the mode finder.
    """

    def __init__(self, W, logp, prior: PriorSpec):
        self.W = W
        self.logp = logp
        self.p1 = np.exp(logp[:, 0])
        self.p2 = np.exp(logp[:, 1])
        self.alpha0 = prior.alpha0
        self.A0_inv = prior.A0_inv
        self._prior_const = mvn_logpdf(prior.alpha0, prior.alpha0, prior.A0)

    def _terms(self, t):
        # linear-space mixture unless some term underflows
        mix = ndtr(-t) * self.p1 + ndtr(t) * self.p2
        if np.all(mix > 1e-280):
            return np.log(mix)
        return log_mixture_terms(t, self.logp)

    def value(self, alpha) -> float:
        t = self.W @ alpha
        diff = alpha - self.alpha0
        return float(self._terms(t).sum() - 0.5 * diff @ self.A0_inv @ diff
                     + self._prior_const)

    def value_and_grad(self, alpha):
        t = self.W @ alpha
        lm = self._terms(t)
        diff = alpha - self.alpha0
        lphi = log_normal_pdf_std(t)
        dt = np.exp(lphi + self.logp[:, 1] - lm) - np.exp(lphi + self.logp[:, 0] - lm)
        val = lm.sum() - 0.5 * diff @ self.A0_inv @ diff + self._prior_const
        grad = self.W.T @ dt - self.A0_inv @ diff
        return float(val), grad
