"""Collapsed and full Gibbs samplers for the two-class ordinal probit."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, log_ndtr

from .model import (
    N_CLASSES, AlphaKernel, ChainState, ContractError, Cutpoints, Dataset,
    ParamDraw, PriorSpec, category_bounds, cutpoints_from_delta,
    log_band_prob, log_normal_pdf_std, log_obs_class_probs, mvn_logpdf,
)
from .truncnorm import rtruncnorm

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-10


@dataclass
class RunConfig:
    n_iter: int = 11000
    burn_in: int = 1000
    seed: int = 0
    proposal_dof: float = 10.0
    opt_maxiter: int = 200
    opt_gtol: float = 1e-6
    keep_u: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ContractError("need 0 <= burn_in < n_iter")
        if self.proposal_dof <= 2:
            raise ContractError("proposal_dof must exceed 2")

    @property
    def n_keep(self) -> int:
        return self.n_iter - self.burn_in


# ---------------------------------------------------------------------------
# tailored multivariate-t proposals

@dataclass
class TailoredProposal:
    location: np.ndarray
    covariance: np.ndarray
    dof: float
    converged: bool = True

    def __post_init__(self):
        self.chol = np.linalg.cholesky(self.covariance)
        self._logdet = 2.0 * np.log(np.diag(self.chol)).sum()

    @property
    def dim(self) -> int:
        return self.location.shape[0]

    def logpdf(self, x) -> float:
        k, nu = self.dim, self.dof
        sol = np.linalg.solve(self.chol, np.asarray(x) - self.location)
        maha = sol @ sol
        return float(gammaln(0.5 * (nu + k)) - gammaln(0.5 * nu)
                     - 0.5 * k * np.log(nu * np.pi) - 0.5 * self._logdet
                     - 0.5 * (nu + k) * np.log1p(maha / nu))

    def draw(self, rng) -> np.ndarray:
        zeta = rng.standard_normal(self.dim)
        w = rng.chisquare(self.dof) / self.dof
        return self.location + self.chol @ zeta / np.sqrt(w)


def _fd_hessian(grad, x):
    k = x.shape[0]
    H = np.empty((k, k))
    for j in range(k):
        h = 1e-4 * (1.0 + abs(x[j]))
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def tailor(value_and_grad, x0, dof, maxiter=200, gtol=1e-6) -> TailoredProposal:
    """Fit a t proposal at the mode of a log kernel.

    ``value_and_grad(x)`` returns the log kernel and its gradient.
    """
    def neg(x):
        v, g = value_and_grad(x)
        return -v, -g

    res = minimize(neg, np.asarray(x0, dtype=float), jac=True, method="BFGS",
                   options={"gtol": gtol, "maxiter": maxiter})
    mode = res.x
    neg_hess = -_fd_hessian(lambda x: value_and_grad(x)[1], mode)
    evals, evecs = np.linalg.eigh(neg_hess)
    evals = np.maximum(evals, EIG_FLOOR)
    cov = (evecs / evals) @ evecs.T
    cov = 0.5 * (cov + cov.T)
    converged = bool(res.success) or np.linalg.norm(res.jac) < 1e-4
    if not converged:
        log.warning("mode finder stopped after %d iterations (|grad|=%.2e); "
                    "inflating proposal covariance", res.nit, np.linalg.norm(res.jac))
        cov = 4.0 * cov
    return TailoredProposal(mode, cov, dof, converged)


def build_tailored_proposal(beta, sigma2, cutpoints, data, prior, config=None,
                            start=None) -> TailoredProposal:
    config = config or RunConfig()
    logp = log_obs_class_probs(data, beta, sigma2, cutpoints)
    kernel = AlphaKernel(data.W, logp, prior)
    x0 = np.zeros(data.p) if start is None else start
    return tailor(kernel.value_and_grad, x0, config.proposal_dof,
                  config.opt_maxiter, config.opt_gtol)


def mh_log_ratio(log_target, proposal, current, candidate) -> float:
    """log of the independence-MH ratio for moving current -> candidate."""
    return (log_target(candidate) - log_target(current)
            + proposal.logpdf(current) - proposal.logpdf(candidate))


def draw_alpha_mh(current_alpha, proposal: TailoredProposal, kernel, rng):
    """Independence MH step; ``kernel`` maps alpha to its log kernel."""
    cand = proposal.draw(rng)
    ratio = mh_log_ratio(kernel, proposal, current_alpha, cand)
    if np.log(rng.uniform()) < ratio:
        return cand, True
    return np.asarray(current_alpha, dtype=float), False


# ---------------------------------------------------------------------------
# conjugate blocks

def beta_conditional(z, u, sigma2, prior: PriorSpec, data: Dataset):
    """Normal full-conditional (means, covariances) of beta_s for both classes."""
    means = np.empty((N_CLASSES, data.q))
    covs = np.empty((N_CLASSES, data.q, data.q))
    for s in range(N_CLASSES):
        mask = u == s + 1
        Xs = data.X[mask]
        prec = prior.B0_inv[s] + Xs.T @ Xs / sigma2[s]
        covs[s] = np.linalg.inv(prec)
        covs[s] = 0.5 * (covs[s] + covs[s].T)
        means[s] = covs[s] @ (prior.B0_inv[s] @ prior.beta0[s] + Xs.T @ z[mask] / sigma2[s])
    return means, covs


def draw_beta(z, u, sigma2, prior, data, rng) -> np.ndarray:
    means, covs = beta_conditional(z, u, sigma2, prior, data)
    out = np.empty_like(means)
    for s in range(N_CLASSES):
        out[s] = means[s] + np.linalg.cholesky(covs[s]) @ rng.standard_normal(data.q)
    return out


def sigma2_conditional(z, u, beta, prior: PriorSpec, data: Dataset):
    """Inverse-gamma (shapes, scales) of sigma2_s for both classes."""
    shapes = np.empty(N_CLASSES)
    scales = np.empty(N_CLASSES)
    for s in range(N_CLASSES):
        mask = u == s + 1
        resid = z[mask] - data.X[mask] @ beta[s]
        shapes[s] = 0.5 * (prior.v + mask.sum())
        scales[s] = 0.5 * (prior.d + resid @ resid)
    return shapes, scales


def draw_sigma2(z, u, beta, prior, data, rng) -> np.ndarray:
    shapes, scales = sigma2_conditional(z, u, beta, prior, data)
    return scales / rng.gamma(shapes)


def class_membership_prob(alpha, logp, data: Dataset) -> np.ndarray:
    """K_i = P(s_i = 2 | theta, y_i) given log P(y_i | s) of shape (n, 2)."""
    t = data.W @ alpha
    a = log_ndtr(t) + logp[:, 1]
    b = log_ndtr(-t) + logp[:, 0]
    den = np.logaddexp(a, b)
    if not np.all(np.isfinite(den)):
        raise ContractError("both class likelihoods vanish for some observation")
    return np.exp(a - den)


def draw_class_indicators(alpha, beta, sigma2, cutpoints, data, rng, logp=None):
    if logp is None:
        logp = log_obs_class_probs(data, beta, sigma2, cutpoints)
    K = class_membership_prob(alpha, logp, data)
    return 1 + (rng.uniform(size=data.n) < K).astype(np.int64)


def draw_latent_z(beta, sigma2, cutpoints, data, u, rng, rows=None) -> np.ndarray:
    """Truncated-normal utilities under each observation's realized class."""
    idx = np.arange(data.n) if rows is None else np.flatnonzero(rows)
    cls = u[idx] - 1
    mean = np.einsum("ij,ij->i", data.X[idx], beta[cls])
    sd = np.sqrt(sigma2[cls])
    lo = np.empty(idx.size)
    hi = np.empty(idx.size)
    for s in range(N_CLASSES):
        m = cls == s
        lo[m], hi[m] = category_bounds(data.y[idx][m], cutpoints.edges(s))
    return rtruncnorm(mean, sd, lo, hi, rng)


# ---------------------------------------------------------------------------
# joint (beta_s, delta_s) block for J > 3

def _gamma_jacobian(delta):
    """d gamma_interior / d delta (lower-triangular)."""
    gamma = cutpoints_from_delta(delta)
    frac = 1.0 / (1.0 + np.exp(-delta))
    m = delta.shape[0]
    jac = np.zeros((m, m))
    for j in range(m):
        jac[j, : j + 1] = (1.0 - gamma[j + 1]) * frac[: j + 1]
    return jac


class OrdinalBlockKernel:
    """log f(y | beta_s, delta_s, sigma2_s, s) + log priors over class-s rows."""

    def __init__(self, data: Dataset, rows, s, sigma2_s, prior: PriorSpec):
        self.X = data.X[rows]
        self.y = data.y[rows]
        self.q = data.q
        self.J = data.J
        self.sd = np.sqrt(sigma2_s)
        self.beta0, self.B0_inv = prior.beta0[s], prior.B0_inv[s]
        self.delta0, self.D0_inv = prior.delta0[s], np.linalg.inv(prior.D0[s])
        self.const = (mvn_logpdf(self.beta0, self.beta0, prior.B0[s])
                      + mvn_logpdf(self.delta0, self.delta0, prior.D0[s]))

    def value_and_grad(self, theta):
        beta, delta = theta[: self.q], theta[self.q:]
        gamma = cutpoints_from_delta(delta)
        edges = np.concatenate(([-np.inf], gamma, [np.inf]))
        lo, hi = category_bounds(self.y, edges)
        mu = self.X @ beta
        a, b = (lo - mu) / self.sd, (hi - mu) / self.sd
        logp = log_band_prob(a, b)
        # phi(bound) / P, zero at infinite bounds
        ra = np.where(np.isfinite(a), np.exp(log_normal_pdf_std(np.where(np.isfinite(a), a, 0.0)) - logp), 0.0)
        rb = np.where(np.isfinite(b), np.exp(log_normal_pdf_std(np.where(np.isfinite(b), b, 0.0)) - logp), 0.0)
        db = self.B0_inv @ (beta - self.beta0)
        dd = self.D0_inv @ (delta - self.delta0)
        val = logp.sum() - 0.5 * (beta - self.beta0) @ db - 0.5 * (delta - self.delta0) @ dd
        g_beta = self.X.T @ ((ra - rb) / self.sd) - db
        # gradient wrt interior cut-points: edge index J - y is the upper bound
        band = self.J - self.y
        g_gamma = np.zeros(self.J - 3)
        for k in range(1, self.J - 2):  # interior cut-point k sits at edges[k + 1]
            g_gamma[k - 1] = (rb[band + 1 == k + 1].sum() - ra[band == k + 1].sum()) / self.sd
        g_delta = _gamma_jacobian(delta).T @ g_gamma - dd
        return float(val + self.const), np.concatenate([g_beta, g_delta])

    def value(self, theta) -> float:
        return self.value_and_grad(theta)[0]


def draw_beta_delta_joint(beta_s, delta_s, sigma2_s, u, data, prior, rng, s=0,
                          config=None):
    """Tailored-t MH draw of (beta_s, delta_s) marginal of the utilities.

    ``s`` is the 0-based class index. Returns (beta_s, delta_s, accepted).
    """
    if data.J <= 3:
        raise ContractError("joint (beta, delta) block needs J > 3; use draw_beta")
    config = config or RunConfig()
    kern = OrdinalBlockKernel(data, u == s + 1, s, sigma2_s, prior)
    current = np.concatenate([beta_s, delta_s])
    prop = tailor(kern.value_and_grad, current, config.proposal_dof,
                  config.opt_maxiter, config.opt_gtol)
    cand = prop.draw(rng)
    if np.log(rng.uniform()) < mh_log_ratio(kern.value, prop, current, cand):
        return cand[: data.q], cand[data.q:], True
    return np.asarray(beta_s, float), np.asarray(delta_s, float), False


# ---------------------------------------------------------------------------
# posterior container

@dataclass
class PosteriorSample:
    alpha: np.ndarray  # (G, p)
    beta: np.ndarray  # (G, 2, q)
    sigma2: np.ndarray  # (G, 2)
    delta: np.ndarray  # (G, 2, J-3)
    accept_rate_alpha: float = float("nan")
    accept_rate_cut: float = float("nan")
    u_draws: np.ndarray | None = None  # (G, n)
    prop_loc: np.ndarray | None = None  # (G, p)
    prop_cov: np.ndarray | None = None  # (G, p, p)
    relabeled: bool = False
    swap_fraction: float = 0.0
    sampler: str = "collapsed"
    meta: dict = field(default_factory=dict)

    @property
    def G(self) -> int:
        return self.alpha.shape[0]

    @property
    def J(self) -> int:
        return self.delta.shape[2] + 3

    def draw(self, g: int) -> ParamDraw:
        return ParamDraw(self.alpha[g], self.beta[g], self.sigma2[g], Cutpoints(self.delta[g]))

    def __iter__(self):
        return (self.draw(g) for g in range(self.G))

    def __len__(self):
        return self.G

    def mean_draw(self) -> ParamDraw:
        return ParamDraw(self.alpha.mean(0), self.beta.mean(0), self.sigma2.mean(0),
                         Cutpoints(self.delta.mean(0)))

    def flat(self):
        """(names, G x k matrix) of every scalar parameter."""
        p, q = self.alpha.shape[1], self.beta.shape[2]
        names = [f"alpha_{k + 1}" for k in range(p)]
        cols = [self.alpha]
        for s in range(N_CLASSES):
            names += [f"beta{s + 1}_{k + 1}" for k in range(q)]
            cols.append(self.beta[:, s])
        names += ["sigma2_1", "sigma2_2"]
        cols.append(self.sigma2)
        for s in range(N_CLASSES):
            m = self.delta.shape[2]
            names += [f"delta{s + 1}_{k + 2}" for k in range(m)]
            cols.append(self.delta[:, s])
        return names, np.column_stack(cols)

    @classmethod
    def from_flat(cls, names, values, **kw) -> "PosteriorSample":
        names = list(names)
        col = {nm: values[:, i] for i, nm in enumerate(names)}
        p = sum(nm.startswith("alpha_") for nm in names)
        q = sum(nm.startswith("beta1_") for nm in names)
        m = sum(nm.startswith("delta1_") for nm in names)
        G = values.shape[0]
        alpha = np.column_stack([col[f"alpha_{k + 1}"] for k in range(p)])
        beta = np.stack([np.column_stack([col[f"beta{s + 1}_{k + 1}"] for k in range(q)])
                         for s in range(N_CLASSES)], axis=1)
        sigma2 = np.column_stack([col["sigma2_1"], col["sigma2_2"]])
        delta = np.zeros((G, N_CLASSES, m))
        for s in range(N_CLASSES):
            for k in range(m):
                delta[:, s, k] = col[f"delta{s + 1}_{k + 2}"]
        return cls(alpha, beta, sigma2, delta, **kw)


def relabel(sample: PosteriorSample) -> PosteriorSample:
    """Order classes so that beta_1's intercept is at least beta_2's.

    Swapped draws exchange the class blocks, negate alpha and flip stored
    labels; the likelihood of every draw is unchanged.
    """
    swap = sample.beta[:, 0, 0] < sample.beta[:, 1, 0]
    out = replace(
        sample,
        alpha=np.where(swap[:, None], -sample.alpha, sample.alpha),
        beta=np.where(swap[:, None, None], sample.beta[:, ::-1], sample.beta),
        sigma2=np.where(swap[:, None], sample.sigma2[:, ::-1], sample.sigma2),
        delta=np.where(swap[:, None, None], sample.delta[:, ::-1], sample.delta),
        relabeled=True,
        swap_fraction=float(swap.mean()) if sample.G else 0.0,
    )
    if sample.u_draws is not None:
        out.u_draws = np.where(swap[:, None], 3 - sample.u_draws, sample.u_draws)
    if sample.prop_loc is not None:
        out.prop_loc = np.where(swap[:, None], -sample.prop_loc, sample.prop_loc)
    return out


# ---------------------------------------------------------------------------
# drivers

def initial_state(data: Dataset, prior: PriorSpec, rng) -> ChainState:
    m = data.J - 3
    delta = prior.delta0.copy() if (m and prior.delta0 is not None) else np.zeros((N_CLASSES, m))
    sig = prior.d / (prior.v - 2.0) if prior.v > 2 else 1.0
    params = ParamDraw(np.zeros(data.p), np.zeros((N_CLASSES, data.q)),
                       np.full(N_CLASSES, sig), Cutpoints(delta))
    u = 1 + (rng.uniform(size=data.n) < 0.5).astype(np.int64)
    z = draw_latent_z(params.beta, params.sigma2, params.cutpoints, data, u, rng)
    return ChainState(params, z, u)


def _ordinal_block(state: ChainState, data, prior, config, rng, counts):
    """Steps (a)-(b): beta (and cut-points when J > 3), then sigma2."""
    par = state.params
    if data.J == 3:
        par.beta = draw_beta(state.z, state.u, par.sigma2, prior, data, rng)
    else:
        delta = par.cutpoints.delta.copy()
        for s in range(N_CLASSES):
            b, d, acc = draw_beta_delta_joint(par.beta[s], delta[s], par.sigma2[s],
                                              state.u, data, prior, rng, s, config)
            par.beta[s], delta[s] = b, d
            counts["cut"] += acc
        par.cutpoints = Cutpoints(delta)
        # utilities must be refreshed inside the block drawn marginally of z
        state.z = draw_latent_z(par.beta, par.sigma2, par.cutpoints, data, state.u, rng)
    par.sigma2 = draw_sigma2(state.z, state.u, par.beta, prior, data, rng)


class _Recorder:
    def __init__(self, data, config, store_proposals):
        G, m = config.n_keep, data.J - 3
        self.alpha = np.empty((G, data.p))
        self.beta = np.empty((G, N_CLASSES, data.q))
        self.sigma2 = np.empty((G, N_CLASSES))
        self.delta = np.empty((G, N_CLASSES, m))
        self.u = np.empty((G, data.n), dtype=np.int8) if config.keep_u else None
        self.loc = np.empty((G, data.p)) if store_proposals else None
        self.cov = np.empty((G, data.p, data.p)) if store_proposals else None

    def record(self, g, state, prop=None):
        par = state.params
        self.alpha[g] = par.alpha
        self.beta[g] = par.beta
        self.sigma2[g] = par.sigma2
        self.delta[g] = par.cutpoints.delta
        if self.u is not None:
            self.u[g] = state.u
        if self.loc is not None and prop is not None:
            self.loc[g] = prop.location
            self.cov[g] = prop.covariance


def run_collapsed_gibbs(data: Dataset, prior: PriorSpec, config: RunConfig,
                        init: ChainState | None = None) -> PosteriorSample:
    """Collapsed sampler: beta, sigma2, alpha marginal of u (tailored MH), u, z."""
    rng = np.random.default_rng(config.seed)
    state = init or initial_state(data, prior, rng)
    rec = _Recorder(data, config, store_proposals=True)
    counts = {"alpha": 0, "cut": 0}
    mode = np.zeros(data.p)
    for it in range(config.n_iter):
        _ordinal_block(state, data, prior, config, rng, counts)
        par = state.params
        logp = log_obs_class_probs(data, par.beta, par.sigma2, par.cutpoints)
        kernel = AlphaKernel(data.W, logp, prior)
        prop = tailor(kernel.value_and_grad, mode, config.proposal_dof,
                      config.opt_maxiter, config.opt_gtol)
        mode = prop.location
        par.alpha, acc = draw_alpha_mh(par.alpha, prop, kernel.value, rng)
        counts["alpha"] += acc
        state.u = draw_class_indicators(par.alpha, par.beta, par.sigma2, par.cutpoints,
                                        data, rng, logp=logp)
        state.z = draw_latent_z(par.beta, par.sigma2, par.cutpoints, data, state.u, rng)
        if it >= config.burn_in:
            rec.record(it - config.burn_in, state, prop)
    return PosteriorSample(
        rec.alpha, rec.beta, rec.sigma2, rec.delta,
        accept_rate_alpha=counts["alpha"] / config.n_iter,
        accept_rate_cut=(counts["cut"] / (2 * config.n_iter)) if data.J > 3 else float("nan"),
        u_draws=rec.u, prop_loc=rec.loc, prop_cov=rec.cov, sampler="collapsed",
    )


def alpha_conditional(l, prior: PriorSpec, data: Dataset):
    """Normal full conditional of alpha given the class utilities l."""
    prec = prior.A0_inv + data.W.T @ data.W
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior.A0_inv @ prior.alpha0 + data.W.T @ l)
    return mean, cov


def draw_class_utility(alpha, u, data, rng) -> np.ndarray:
    """l_i ~ N(w_i'alpha, 1) truncated to (0, inf) if s_i = 2 else (-inf, 0]."""
    two = u == 2
    lo = np.where(two, 0.0, -np.inf)
    hi = np.where(two, np.inf, 0.0)
    return rtruncnorm(data.W @ alpha, 1.0, lo, hi, rng)


def run_full_gibbs(data: Dataset, prior: PriorSpec, config: RunConfig,
                   init: ChainState | None = None) -> PosteriorSample:
    """Data-augmentation sampler with the class utility l in the state."""
    rng = np.random.default_rng(config.seed)
    state = init or initial_state(data, prior, rng)
    if state.l is None:
        state.l = draw_class_utility(state.params.alpha, state.u, data, rng)
    rec = _Recorder(data, config, store_proposals=False)
    counts = {"alpha": 0, "cut": 0}
    for it in range(config.n_iter):
        _ordinal_block(state, data, prior, config, rng, counts)
        par = state.params
        mean, cov = alpha_conditional(state.l, prior, data)
        par.alpha = mean + np.linalg.cholesky(cov) @ rng.standard_normal(data.p)
        state.u = draw_class_indicators(par.alpha, par.beta, par.sigma2, par.cutpoints,
                                        data, rng)
        # u is drawn marginally of l, so l is refreshed in the same block
        state.l = draw_class_utility(par.alpha, state.u, data, rng)
        state.z = draw_latent_z(par.beta, par.sigma2, par.cutpoints, data, state.u, rng)
        if it >= config.burn_in:
            rec.record(it - config.burn_in, state)
    return PosteriorSample(
        rec.alpha, rec.beta, rec.sigma2, rec.delta,
        accept_rate_alpha=1.0,
        accept_rate_cut=(counts["cut"] / (2 * config.n_iter)) if data.J > 3 else float("nan"),
        u_draws=rec.u, sampler="full",
    )


SAMPLERS = {"collapsed": run_collapsed_gibbs, "full": run_full_gibbs}
