import logging
import warnings

import numpy as np
import pytest
from scipy import stats

from lcprobit.inference import autocorrelation, effective_sample_size
from lcprobit.model import (
    ContractError, Cutpoints, Dataset, PriorSpec, log_likelihood,
    log_obs_class_probs, mixture_outcome_probs,
)
from lcprobit.samplers import (
    AlphaKernel, OrdinalBlockKernel, PosteriorSample, RunConfig, TailoredProposal,
    alpha_conditional, beta_conditional, build_tailored_proposal, class_membership_prob,
    draw_alpha_mh, draw_beta, draw_beta_delta_joint, draw_class_indicators, draw_latent_z,
    draw_sigma2, mh_log_ratio, relabel, run_collapsed_gibbs, run_full_gibbs,
    sigma2_conditional, tailor,
)
from lcprobit.simulate import SETTINGS, SimSpec, generate


def small_data(rng, n=60, p=2, q=2, J=3):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, q - 1))])
    W = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    y = rng.integers(1, J + 1, n)
    y[:J] = np.arange(1, J + 1)
    return Dataset(y, X, W, J)


def test_run_config_contract():
    with pytest.raises(ContractError):
        RunConfig(n_iter=10, burn_in=10)
    with pytest.raises(ContractError):
        RunConfig(proposal_dof=2.0)
    assert RunConfig().n_keep == 10000


# ---------------------------------------------------------------------------
# conjugate blocks

def test_beta_flat_prior_is_least_squares(rng):
    d = small_data(rng)
    prior = PriorSpec(np.zeros(2), np.eye(2), np.zeros((2, 2)), np.stack([1e14 * np.eye(2)] * 2))
    z = rng.normal(size=d.n)
    u = np.where(np.arange(d.n) % 2 == 0, 1, 2)
    means, _ = beta_conditional(z, u, np.ones(2), prior, d)
    for s in (1, 2):
        ols = np.linalg.lstsq(d.X[u == s], z[u == s], rcond=None)[0]
        np.testing.assert_allclose(means[s - 1], ols, atol=1e-8)


def test_beta_empty_class_is_prior(rng):
    d = small_data(rng)
    prior = PriorSpec(np.zeros(2), np.eye(2), np.array([[0.3, -0.2], [1.0, 2.0]]),
                      np.stack([np.eye(2), np.diag([2.0, 0.5])]))
    means, covs = beta_conditional(rng.normal(size=d.n), np.ones(d.n, int), np.ones(2),
                                   prior, d)
    np.testing.assert_allclose(means[1], [1.0, 2.0])
    np.testing.assert_allclose(covs[1], np.diag([2.0, 0.5]))


def test_beta_monte_carlo_moments(rng):
    d = small_data(rng)
    prior = PriorSpec.default(2, 2)
    z, u, s2 = rng.normal(size=d.n), rng.integers(1, 3, d.n), np.array([0.4, 1.5])
    means, covs = beta_conditional(z, u, s2, prior, d)
    g = np.random.default_rng(99)
    draws = np.array([draw_beta(z, u, s2, prior, d, g) for _ in range(100_000)])
    se = np.sqrt(np.stack([np.diag(c) for c in covs]) / draws.shape[0])
    assert np.all(np.abs(draws.mean(0) - means) < 4 * se)


def test_sigma2_empty_class_and_prior_mean(rng):
    d = small_data(rng)
    prior = PriorSpec.default(2, 2)
    shapes, scales = sigma2_conditional(rng.normal(size=d.n), np.ones(d.n, int),
                                        np.zeros((2, 2)), prior, d)
    assert shapes[1] == pytest.approx(4.3) and scales[1] == pytest.approx(1.3)
    assert scales[1] / (shapes[1] - 1) == pytest.approx(0.394, abs=5e-4)


def test_sigma2_monte_carlo_moments(rng):
    d = small_data(rng)
    prior = PriorSpec.default(2, 2)
    z, u, beta = rng.normal(size=d.n), rng.integers(1, 3, d.n), rng.normal(size=(2, 2))
    shapes, scales = sigma2_conditional(z, u, beta, prior, d)
    g = np.random.default_rng(5)
    draws = np.array([draw_sigma2(z, u, beta, prior, d, g) for _ in range(100_000)])
    mean = scales / (shapes - 1)
    sd = np.sqrt(scales ** 2 / ((shapes - 1) ** 2 * (shapes - 2)))
    assert np.all(np.abs(draws.mean(0) - mean) < 4 * sd / np.sqrt(draws.shape[0]))


# ---------------------------------------------------------------------------
# tailored proposal and MH

def test_mode_is_prior_mean_when_classes_identical(rng):
    d = small_data(rng)
    prior = PriorSpec(np.array([0.4, -0.3]), 2 * np.eye(2), np.zeros((2, 2)),
                      np.stack([np.eye(2)] * 2))
    beta = np.stack([[0.2, 0.5]] * 2)
    prop = build_tailored_proposal(beta, np.array([0.6, 0.6]), Cutpoints.fixed(), d, prior)
    np.testing.assert_allclose(prop.location, [0.4, -0.3], atol=1e-6)
    np.testing.assert_allclose(prop.covariance, 2 * np.eye(2), rtol=1e-4)


def test_mode_matches_grid_search(rng):
    n = 80
    d = Dataset(rng.integers(1, 4, n), np.column_stack([np.ones(n), rng.normal(size=n)]),
                np.ones((n, 1)))
    prior = PriorSpec.default(1, 2)
    beta, sigma2 = np.array([[1.2, 0.5], [-0.3, -0.4]]), np.array([0.4, 0.9])
    prop = build_tailored_proposal(beta, sigma2, Cutpoints.fixed(), d, prior)
    kern = AlphaKernel(d.W, log_obs_class_probs(d, beta, sigma2, Cutpoints.fixed()), prior)
    coarse = np.linspace(-5, 5, 10001)
    a0 = coarse[np.argmax([kern.value(np.array([a])) for a in coarse])]
    fine = np.arange(a0 - 2e-3, a0 + 2e-3, 1e-6)
    best = fine[np.argmax([kern.value(np.array([a])) for a in fine])]
    assert abs(prop.location[0] - best) < 2e-6


def test_proposal_covariance_spd(setting1, setting1_prior):
    s = SETTINGS[1]
    prop = build_tailored_proposal(np.asarray(s["beta_true"]), np.asarray(s["sigma2_true"]),
                                   Cutpoints.fixed(), setting1.dataset, setting1_prior)
    assert prop.converged
    assert np.linalg.eigvalsh(prop.covariance).min() > 0


def test_nonconvergence_inflates_covariance(caplog):
    # kernel -x^4/4 - x^2/2: mode 0, negative Hessian 1 at the mode
    def vg(x):
        return float(-0.25 * np.sum(x ** 4) - 0.5 * x @ x), -x ** 3 - x

    good = tailor(vg, np.array([3.0]), 10.0)
    with caplog.at_level(logging.WARNING):
        bad = tailor(vg, np.array([3.0]), 10.0, maxiter=1)
    assert good.converged and not bad.converged
    assert "inflating" in caplog.text
    hess = 1.0 + 3 * bad.location[0] ** 2
    assert bad.covariance[0, 0] == pytest.approx(4.0 / hess, rel=1e-5)


class _FixedProposal(TailoredProposal):
    def __init__(self, draw_value, **kw):
        super().__init__(**kw)
        self._value = np.asarray(draw_value, float)

    def draw(self, rng):
        return self._value.copy()


def test_mh_accepts_uphill_with_symmetric_proposal():
    prop = _FixedProposal([1.0], location=np.zeros(1), covariance=np.eye(1), dof=10.0)
    for seed in range(200):
        a, acc = draw_alpha_mh(np.array([-1.0]), prop, lambda x: float(x[0]),
                               np.random.default_rng(seed))
        assert acc and a[0] == 1.0


def test_mh_identity_move_always_accepted():
    prop = _FixedProposal([0.7], location=np.zeros(1), covariance=np.eye(1), dof=10.0)
    assert mh_log_ratio(lambda x: -x @ x, prop, np.array([0.7]), np.array([0.7])) == 0.0
    for seed in range(200):
        _, acc = draw_alpha_mh(np.array([0.7]), prop, lambda x: -float(x @ x),
                               np.random.default_rng(seed))
        assert acc


def test_t_proposal_density_matches_scipy(rng):
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    prop = TailoredProposal(np.array([0.2, -1.0]), cov, 7.0)
    x = rng.normal(size=2)
    ref = stats.multivariate_t(prop.location, cov, df=7.0).logpdf(x)
    assert prop.logpdf(x) == pytest.approx(ref, rel=1e-12)


def test_acceptance_rate_setting1(setting1_short):
    col, _ = setting1_short
    assert 0.5 < col.accept_rate_alpha < 1.0


# ---------------------------------------------------------------------------
# class indicators and latent utilities

def test_indicators_degenerate_weight(rng):
    d = small_data(rng)
    u = draw_class_indicators(np.array([50.0, 0.0]), rng.normal(size=(2, 2)),
                              np.ones(2), Cutpoints.fixed(), d, rng)
    assert np.all(u == 2)


def test_indicators_equal_likelihood(rng):
    d = small_data(rng)
    alpha = np.array([0.3, -0.8])
    logp = np.log(np.full((d.n, 2), 0.3))
    K = class_membership_prob(alpha, logp, d)
    np.testing.assert_allclose(K, stats.norm.cdf(d.W @ alpha), rtol=1e-13)


def test_indicators_zero_over_zero(rng):
    d = small_data(rng)
    with pytest.raises(ContractError):
        class_membership_prob(np.zeros(2), np.full((d.n, 2), -np.inf), d)


def test_classification_accuracy_setting1(setting1):
    s = SETTINGS[1]
    logp = log_obs_class_probs(setting1.dataset, np.asarray(s["beta_true"]),
                               np.asarray(s["sigma2_true"]), Cutpoints.fixed())
    K = class_membership_prob(np.asarray(s["alpha_true"]), logp, setting1.dataset)
    acc = np.where(setting1.s_true == 2, K, 1 - K).mean()
    assert acc > 0.75


def _one_obs(y, x=0.0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Dataset(np.full(100_000, y), np.ones((100_000, 1)), np.ones((100_000, 1)))


def test_latent_z_regions():
    rng = np.random.default_rng(0)
    d = _one_obs(1)
    z = draw_latent_z(np.zeros((2, 1)), np.ones(2), Cutpoints.fixed(), d,
                      np.ones(d.n, int), rng)
    assert np.all(z > 1)
    d = _one_obs(2)
    z = draw_latent_z(np.full((2, 1), 0.5), np.ones(2), Cutpoints.fixed(), d,
                      np.ones(d.n, int), rng)
    assert np.all((z > 0) & (z <= 1))
    ref = stats.truncnorm(-0.5, 0.5, loc=0.5)
    assert abs(z.mean() - ref.mean()) < 4 * ref.std() / np.sqrt(d.n)


def test_latent_z_extreme_region():
    rng = np.random.default_rng(0)
    d = _one_obs(3)
    z = draw_latent_z(np.full((2, 1), 8.0), np.ones(2), Cutpoints.fixed(), d,
                      np.full(d.n, 2), rng)
    assert np.all(np.isfinite(z)) and np.all(z <= 0)


# ---------------------------------------------------------------------------
# samplers

def test_degenerate_all_equal_outcomes():
    rng = np.random.default_rng(0)
    n = 200
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = Dataset(np.full(n, 2), np.column_stack([np.ones(n), rng.normal(size=n)]),
                    np.column_stack([np.ones(n), rng.normal(size=n)]))
    prior = PriorSpec.default(2, 2)
    for run in (run_collapsed_gibbs, run_full_gibbs):
        s = run(d, prior, RunConfig(n_iter=800, burn_in=200, seed=2))
        # the class that absorbs the observations has its variance shrunk
        assert s.sigma2.mean(0).min() < prior.d / (prior.v - 2) / 2


def test_samplers_reproducible(rng):
    d = small_data(rng)
    prior = PriorSpec.default(2, 2)
    cfg = RunConfig(n_iter=60, burn_in=10, seed=4)
    for run in (run_collapsed_gibbs, run_full_gibbs):
        a, b = run(d, prior, cfg), run(d, prior, cfg)
        np.testing.assert_array_equal(a.flat()[1], b.flat()[1])


def test_loglik_finite_at_every_draw(setting1, setting1_short):
    for s in setting1_short:
        ll = [log_likelihood(setting1.dataset, s.draw(g)) for g in range(0, s.G, 50)]
        assert np.all(np.isfinite(ll))


def test_cross_sampler_agreement(setting1_short):
    col, full = setting1_short
    names, a = col.flat()
    _, b = full.flat()
    for k, nm in enumerate(names):
        se = np.hypot(a[:, k].std() / np.sqrt(effective_sample_size(a[:, k])),
                      b[:, k].std() / np.sqrt(effective_sample_size(b[:, k])))
        assert abs(a[:, k].mean() - b[:, k].mean()) < 3 * se, nm


def test_full_gibbs_more_autocorrelated(setting1_short):
    col, full = setting1_short
    for k in range(col.alpha.shape[1]):
        assert autocorrelation(full.alpha[:, k], 1)[1] > autocorrelation(col.alpha[:, k], 1)[1]


def test_alpha_conditional_flat_limit(rng):
    d = small_data(rng)
    prior = PriorSpec(np.zeros(2), 1e14 * np.eye(2), np.zeros((2, 2)),
                      np.stack([np.eye(2)] * 2))
    l = rng.normal(size=d.n)
    mean, cov = alpha_conditional(l, prior, d)
    np.testing.assert_allclose(mean, np.linalg.lstsq(d.W, l, rcond=None)[0], atol=1e-8)
    np.testing.assert_allclose(cov, np.linalg.inv(d.W.T @ d.W), rtol=1e-8)


# ---------------------------------------------------------------------------
# J > 3 block

def test_joint_block_requires_j_above_three(rng):
    d = small_data(rng)
    with pytest.raises(ContractError):
        draw_beta_delta_joint(np.zeros(2), np.zeros(0), 1.0, np.ones(d.n, int), d,
                              PriorSpec.default(2, 2), rng)


def test_joint_kernel_matches_plain_ordinal_posterior(rng):
    d = small_data(rng, J=5)
    prior = PriorSpec.default(2, 2, J=5)
    kern = OrdinalBlockKernel(d, np.ones(d.n, bool), 0, 0.7, prior)
    beta, delta = np.array([0.3, -0.5]), np.array([0.2, -1.0])
    gam = Cutpoints(np.stack([delta, delta])).edges(0)
    ll = 0.0
    for i in range(d.n):
        mu = d.X[i] @ beta
        band = d.J - d.y[i]
        ll += np.log(stats.norm.cdf((gam[band + 1] - mu) / np.sqrt(0.7))
                     - stats.norm.cdf((gam[band] - mu) / np.sqrt(0.7)))
    ref = (ll + stats.multivariate_normal(np.zeros(2), np.eye(2)).logpdf(beta)
           + stats.multivariate_normal(np.zeros(2), np.eye(2)).logpdf(delta))
    val, grad = kern.value_and_grad(np.concatenate([beta, delta]))
    assert val == pytest.approx(ref, rel=1e-10)
    # analytic gradient against central differences
    x = np.concatenate([beta, delta])
    fd = [(kern.value(x + h) - kern.value(x - h)) / 2e-6 for h in np.eye(4) * 1e-6]
    np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-6)


def test_joint_block_identity_proposal_accepts(rng):
    d = small_data(rng, J=4)
    kern = OrdinalBlockKernel(d, np.ones(d.n, bool), 0, 1.0, PriorSpec.default(2, 2, J=4))
    prop = TailoredProposal(np.zeros(3), np.eye(3), 10.0)
    x = np.array([0.1, 0.2, 0.3])
    assert mh_log_ratio(kern.value, prop, x, x) == 0.0


@pytest.mark.slow
def test_j4_recovers_middle_cutpoint():
    spec = SimSpec(alpha_true=[0.0, 1.0], beta_true=[[0.6, 0.8], [0.3, -0.5]],
                   sigma2_true=[0.3, 0.3], n=600, J=4, delta_true=[[0.0], [0.0]],
                   x_means=(0.0,), x_vars=(1.0,), seed=3)
    d = generate(spec).dataset
    s = relabel(run_collapsed_gibbs(d, PriorSpec.default(2, 2, J=4),
                                    RunConfig(n_iter=1500, burn_in=500, seed=1)))
    assert 0.2 < s.accept_rate_cut <= 1.0
    g2 = np.array([s.draw(i).cutpoints.gamma(c)[1] for i in range(s.G) for c in (0, 1)])
    g2 = g2.reshape(s.G, 2)
    for c in range(2):
        assert abs(g2[:, c].mean() - 0.5) < 2 * g2[:, c].std()


# ---------------------------------------------------------------------------
# relabeling

def _fake_sample(rng, G=50, p=2, q=2):
    return PosteriorSample(rng.normal(size=(G, p)), rng.normal(size=(G, 2, q)),
                           rng.uniform(0.2, 1.5, (G, 2)), np.zeros((G, 2, 0)),
                           u_draws=rng.integers(1, 3, (G, 10)), prop_loc=rng.normal(size=(G, p)))


def test_relabel_orders_and_preserves_likelihood(rng):
    d = small_data(rng)
    s = _fake_sample(rng)
    r = relabel(s)
    assert np.all(r.beta[:, 0, 0] >= r.beta[:, 1, 0])
    swapped = s.beta[:, 0, 0] < s.beta[:, 1, 0]
    assert r.swap_fraction == pytest.approx(swapped.mean())
    for g in range(s.G):
        a, b = s.draw(g), r.draw(g)
        assert abs(log_likelihood(d, a) - log_likelihood(d, b)) < 1e-10
        np.testing.assert_allclose(mixture_outcome_probs(d.X, d.W, a),
                                   mixture_outcome_probs(d.X, d.W, b), atol=1e-10)
        if swapped[g]:
            np.testing.assert_array_equal(r.u_draws[g], 3 - s.u_draws[g])
            np.testing.assert_array_equal(r.prop_loc[g], -s.prop_loc[g])
        else:
            np.testing.assert_array_equal(r.u_draws[g], s.u_draws[g])


def test_relabel_noop_on_ordered(rng):
    s = _fake_sample(rng)
    s.beta[:, 0, 0] = np.abs(s.beta[:, 0, 0]) + 1
    s.beta[:, 1, 0] = -np.abs(s.beta[:, 1, 0])
    r = relabel(s)
    np.testing.assert_array_equal(r.flat()[1], s.flat()[1])
    assert r.swap_fraction == 0.0 and r.relabeled


def test_relabeled_intercept_unimodal(setting1_short):
    col, _ = setting1_short
    x = col.beta[:, 0, 0]
    # Sarle's bimodality coefficient; values above 5/9 suggest bimodality
    n = x.size
    g, k = stats.skew(x), stats.kurtosis(x)
    bc = (g ** 2 + 1) / (k + 3 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
    assert bc < 5 / 9


def test_flat_round_trip(rng):
    s = PosteriorSample(rng.normal(size=(5, 2)), rng.normal(size=(5, 2, 3)),
                        rng.uniform(0.1, 1, (5, 2)), rng.normal(size=(5, 2, 2)))
    names, vals = s.flat()
    assert names[:3] == ["alpha_1", "alpha_2", "beta1_1"] and names[-1] == "delta2_3"
    back = PosteriorSample.from_flat(names, vals)
    np.testing.assert_array_equal(back.flat()[1], vals)
