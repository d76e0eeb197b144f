"""Marginal likelihood by the basic marginal likelihood identity.

The posterior ordinate at theta* is factored as

    pi(alpha* | y) * pi(beta* | alpha*, y) * pi(sigma2* | alpha*, beta*, y)

with the alpha ordinate estimated from MH acceptance probabilities (main run
plus a reduced run with alpha fixed) and the other two by Rao-Blackwellized
averages of their conjugate full conditionals over reduced runs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .model import (
    N_CLASSES, AlphaKernel, ChainState, ContractError, Cutpoints, Dataset, ParamDraw,
    PriorSpec, invgamma_logpdf, log_likelihood, log_mixture_terms, log_obs_class_probs,
    mvn_logpdf,
)
from .samplers import (
    PosteriorSample, RunConfig, TailoredProposal, beta_conditional,
    draw_beta, draw_class_indicators, draw_latent_z, draw_sigma2, mh_log_ratio, relabel,
    sigma2_conditional, tailor,
)

log = logging.getLogger(__name__)

N_BATCHES = 20


class NumericalError(ArithmeticError):
    pass


@dataclass
class Ordinate:
    log_value: float
    mc_se: float  # standard error on the log scale
    n_draws: int
    details: dict = field(default_factory=dict)


@dataclass
class MarginalLikelihoodResult:
    log_ml: float
    log_lik: float
    log_prior: float
    alpha: Ordinate
    beta: Ordinate
    sigma2: Ordinate
    theta_star: ParamDraw

    @property
    def log_posterior_ordinate(self) -> float:
        return self.alpha.log_value + self.beta.log_value + self.sigma2.log_value

    @property
    def mc_se(self) -> float:
        return float(np.sqrt(self.alpha.mc_se ** 2 + self.beta.mc_se ** 2
                             + self.sigma2.mc_se ** 2))

    def to_dict(self) -> dict:
        return {
            "log_ml": self.log_ml, "mc_se": self.mc_se,
            "log_likelihood_at_theta_star": self.log_lik,
            "log_prior_at_theta_star": self.log_prior,
            "log_ordinate_alpha": self.alpha.log_value,
            "log_ordinate_beta": self.beta.log_value,
            "log_ordinate_sigma2": self.sigma2.log_value,
            "mc_se_alpha": self.alpha.mc_se, "mc_se_beta": self.beta.mc_se,
            "mc_se_sigma2": self.sigma2.mc_se,
            "theta_star": {"alpha": self.theta_star.alpha.tolist(),
                           "beta": self.theta_star.beta.tolist(),
                           "sigma2": self.theta_star.sigma2.tolist()},
        }


def _log_mean(logs):
    logs = np.asarray(logs, dtype=float)
    return float(logsumexp(logs) - np.log(logs.size))


def _log_se(logs, n_batches=N_BATCHES) -> float:
    """Batch-means standard error of log(mean(exp(logs))) via the delta method."""
    logs = np.asarray(logs, dtype=float)
    m = logs.size // n_batches
    if m < 1:
        return float("nan")
    ref = logs.max()
    vals = np.exp(logs[: m * n_batches] - ref).reshape(n_batches, m).mean(axis=1)
    mean = vals.mean()
    if mean <= 0:
        return float("inf")
    return float(vals.std(ddof=1) / np.sqrt(n_batches) / mean)


def _reduced_config(config: RunConfig, n_keep: int | None, seed) -> RunConfig:
    n_keep = n_keep or config.n_keep
    burn = max(1, n_keep // 10)
    return replace(config, n_iter=n_keep + burn, burn_in=burn, seed=seed, keep_u=False)


def _start_state(theta: ParamDraw, data: Dataset, rng) -> ChainState:
    params = ParamDraw(theta.alpha.copy(), theta.beta.copy(), theta.sigma2.copy(),
                       theta.cutpoints)
    u = draw_class_indicators(params.alpha, params.beta, params.sigma2, params.cutpoints,
                              data, rng)
    z = draw_latent_z(params.beta, params.sigma2, params.cutpoints, data, u, rng)
    return ChainState(params, z, u)


def _proposal_for_draw(sample, g, config, kernel, swap=False):
    """Main-run proposal of draw g (mirrored for the label-swapped twin), or a
    freshly tailored one when the sample did not store its proposals."""
    if sample.prop_loc is not None:
        loc = -sample.prop_loc[g] if swap else sample.prop_loc[g]
        return TailoredProposal(loc, sample.prop_cov[g], config.proposal_dof)
    start = -sample.alpha[g] if swap else sample.alpha[g]
    return tailor(kernel.value_and_grad, start, config.proposal_dof,
                  config.opt_maxiter, config.opt_gtol)


def _alpha_numerator_terms(sample, alpha_star, data, prior, config, swap=False):
    """log[ min(1, ratio(alpha_g -> alpha*)) q(alpha* | beta_g, sigma2_g) ] per draw."""
    out = np.empty(sample.G)
    for g in range(sample.G):
        theta = sample.draw(g)
        if swap:
            theta = theta.swapped()
        logp = log_obs_class_probs(data, theta.beta, theta.sigma2, theta.cutpoints)
        kernel = AlphaKernel(data.W, logp, prior)
        prop = _proposal_for_draw(sample, g, config, kernel, swap)
        ratio = mh_log_ratio(kernel.value, prop, theta.alpha, alpha_star)
        out[g] = min(0.0, ratio) + prop.logpdf(alpha_star)
    return out


def alpha_ordinate(data: Dataset, prior: PriorSpec, config: RunConfig,
                   main_sample: PosteriorSample, alpha_star, n_keep=None, seed=None,
                   symmetrize=None, theta_star: ParamDraw | None = None) -> Ordinate:
    """Estimate log pi(alpha* | y) from MH acceptance probabilities.

    With label-exchangeable priors the posterior is invariant under the class
    swap, so the numerator averages over each main draw and its swapped twin;
    this stays correct whether or not the chain visited both label modes.
    """
    alpha_star = np.asarray(alpha_star, dtype=float)
    if symmetrize is None:
        symmetrize = prior.exchangeable
    num = _alpha_numerator_terms(main_sample, alpha_star, data, prior, config)
    if symmetrize:
        num_sw = _alpha_numerator_terms(main_sample, alpha_star, data, prior, config, swap=True)
        num = np.logaddexp(num, num_sw) - np.log(2.0)

    rc = _reduced_config(config, n_keep, seed)
    rng = np.random.default_rng(rc.seed)
    theta0 = theta_star or main_sample.mean_draw()
    theta0 = replace(theta0, alpha=alpha_star)
    state = _start_state(theta0, data, rng)
    par = state.params
    den = []
    mode = alpha_star.copy()
    for it in range(rc.n_iter):
        par.beta = draw_beta(state.z, state.u, par.sigma2, prior, data, rng)
        par.sigma2 = draw_sigma2(state.z, state.u, par.beta, prior, data, rng)
        logp = label_swap_move(par, alpha_star, data, prior, rng)
        kernel = AlphaKernel(data.W, logp, prior)
        prop = tailor(kernel.value_and_grad, mode, rc.proposal_dof, rc.opt_maxiter, rc.opt_gtol)
        mode = prop.location
        cand = prop.draw(rng)
        if it >= rc.burn_in:
            den.append(min(0.0, mh_log_ratio(kernel.value, prop, alpha_star, cand)))
        state.u = draw_class_indicators(alpha_star, par.beta, par.sigma2, par.cutpoints,
                                        data, rng, logp=logp)
        state.z = draw_latent_z(par.beta, par.sigma2, par.cutpoints, data, state.u, rng)
    den = np.asarray(den)
    log_num, log_den = _log_mean(num), _log_mean(den)
    if not np.isfinite(log_den):
        raise NumericalError("alpha-ordinate denominator is zero: no proposal from "
                             "the reduced run would be accepted at alpha*")
    se = float(np.hypot(_log_se(num), _log_se(den)))
    return Ordinate(log_num - log_den, se, den.size,
                    {"log_numerator": log_num, "log_denominator": log_den,
                     "symmetrized": bool(symmetrize)})


def label_swap_move(par: ParamDraw, alpha, data, prior, rng):
    """MH move exchanging the two class blocks with alpha held fixed.

    The exchange is an involution, so the acceptance ratio is the ratio of
    the (u, z)-marginal posterior kernels. Returns log P(y_i | s) for the
    state kept. With alpha fixed the conditional posterior can have two
    label modes that the data-augmentation updates alone cross slowly.
    """
    swapped = ParamDraw(alpha, par.beta[::-1].copy(), par.sigma2[::-1].copy(),
                        Cutpoints(par.cutpoints.delta[::-1].copy()))
    cur = ParamDraw(alpha, par.beta, par.sigma2, par.cutpoints)
    lp_cur = log_obs_class_probs(data, cur.beta, cur.sigma2, cur.cutpoints)
    lp_sw = lp_cur[:, ::-1]
    t = data.W @ alpha
    ratio = (log_mixture_terms(t, lp_sw).sum() + prior.log_density(swapped)
             - log_mixture_terms(t, lp_cur).sum() - prior.log_density(cur))
    if np.log(rng.uniform()) < ratio:
        par.beta, par.sigma2, par.cutpoints = swapped.beta, swapped.sigma2, swapped.cutpoints
        return lp_sw
    return lp_cur


def beta_ordinate(data: Dataset, prior: PriorSpec, config: RunConfig, alpha_star, beta_star,
                  n_keep=None, seed=None, theta_start: ParamDraw | None = None) -> Ordinate:
    """Rao-Blackwellized log pi(beta* | alpha*, y) from a reduced run with alpha fixed."""
    alpha_star = np.asarray(alpha_star, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    rc = _reduced_config(config, n_keep, seed)
    rng = np.random.default_rng(rc.seed)
    theta0 = theta_start or _prior_mean_draw(data, prior)
    theta0 = replace(theta0, alpha=alpha_star, beta=beta_star)
    state = _start_state(theta0, data, rng)
    par = state.params
    terms = []
    for it in range(rc.n_iter):
        means, covs = beta_conditional(state.z, state.u, par.sigma2, prior, data)
        if it >= rc.burn_in:
            terms.append(sum(mvn_logpdf(beta_star[s], means[s], covs[s])
                             for s in range(N_CLASSES)))
        par.beta = np.stack([means[s] + np.linalg.cholesky(covs[s]) @ rng.standard_normal(data.q)
                             for s in range(N_CLASSES)])
        par.sigma2 = draw_sigma2(state.z, state.u, par.beta, prior, data, rng)
        logp = label_swap_move(par, alpha_star, data, prior, rng)
        state.u = draw_class_indicators(alpha_star, par.beta, par.sigma2, par.cutpoints,
                                        data, rng, logp=logp)
        state.z = draw_latent_z(par.beta, par.sigma2, par.cutpoints, data, state.u, rng)
    terms = np.asarray(terms)
    return Ordinate(_log_mean(terms), _log_se(terms), terms.size)


def sigma2_ordinate(data: Dataset, prior: PriorSpec, config: RunConfig, alpha_star,
                    beta_star, sigma2_star, n_keep=None, seed=None,
                    theta_start: ParamDraw | None = None) -> Ordinate:
    """Rao-Blackwellized log pi(sigma2* | alpha*, beta*, y)."""
    alpha_star = np.asarray(alpha_star, dtype=float)
    beta_star = np.asarray(beta_star, dtype=float)
    sigma2_star = np.asarray(sigma2_star, dtype=float)
    rc = _reduced_config(config, n_keep, seed)
    rng = np.random.default_rng(rc.seed)
    theta0 = theta_start or _prior_mean_draw(data, prior)
    theta0 = replace(theta0, alpha=alpha_star, beta=beta_star)
    state = _start_state(theta0, data, rng)
    par = state.params
    terms = []
    for it in range(rc.n_iter):
        shapes, scales = sigma2_conditional(state.z, state.u, beta_star, prior, data)
        if it >= rc.burn_in:
            terms.append(float(invgamma_logpdf(sigma2_star, shapes, scales).sum()))
        par.sigma2 = scales / rng.gamma(shapes)
        state.u = draw_class_indicators(alpha_star, beta_star, par.sigma2, par.cutpoints,
                                        data, rng)
        state.z = draw_latent_z(beta_star, par.sigma2, par.cutpoints, data, state.u, rng)
    terms = np.asarray(terms)
    return Ordinate(_log_mean(terms), _log_se(terms), terms.size)


def _prior_mean_draw(data, prior) -> ParamDraw:
    sig = prior.d / (prior.v - 2.0) if prior.v > 2 else 1.0
    return ParamDraw(prior.alpha0.copy(), prior.beta0.copy(), np.full(N_CLASSES, sig),
                     Cutpoints.fixed(data.J))


def chib_marginal_likelihood(data: Dataset, prior: PriorSpec, config: RunConfig,
                             main_sample: PosteriorSample, n_keep=None,
                             theta_star: ParamDraw | None = None) -> MarginalLikelihoodResult:
    """log m(y) = log f(y | theta*) + log pi(theta*) - log pi(theta* | y)."""
    if data.J != 3:
        raise ContractError("marginal likelihood is implemented for J = 3 only")
    if not main_sample.relabeled:
        main_sample = relabel(main_sample)
    theta = theta_star or main_sample.mean_draw()
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    s_alpha, s_beta, s_sig = (int(ss.generate_state(1, np.uint64)[0]) for ss in seeds)
    ord_a = alpha_ordinate(data, prior, config, main_sample, theta.alpha, n_keep, s_alpha,
                           theta_star=theta)
    ord_b = beta_ordinate(data, prior, config, theta.alpha, theta.beta, n_keep, s_beta,
                          theta_start=theta)
    ord_s = sigma2_ordinate(data, prior, config, theta.alpha, theta.beta, theta.sigma2,
                            n_keep, s_sig, theta_start=theta)
    ll = log_likelihood(data, theta)
    lp = prior.log_density(theta)
    log_ml = ll + lp - (ord_a.log_value + ord_b.log_value + ord_s.log_value)
    return MarginalLikelihoodResult(log_ml, ll, lp, ord_a, ord_b, ord_s, theta)
