import numpy as np
import pytest
from scipy import stats

from lcprobit.model import ContractError, Cutpoints, ParamDraw, mixture_outcome_probs
from lcprobit.simulate import SimSpec, builtin_setting, check_consistency, generate


def test_builtin_settings():
    s1, s2 = builtin_setting(1), builtin_setting(2)
    np.testing.assert_array_equal(s1.alpha_true, [-0.3, 1.5])
    np.testing.assert_array_equal(s1.beta_true, [[0.6, -0.7, -0.6, 0.5], [0.1, 0.6, 0.2, 0.8]])
    np.testing.assert_array_equal(s2.beta_true[1], [0.1, -0.1, -0.1, 0.8])
    np.testing.assert_array_equal(s2.beta_true[0], [0.6, -0.6, -0.6, 0.5])
    for s in (s1, s2):
        np.testing.assert_array_equal(s.sigma2_true, [0.25, 0.25])
        assert (s.n, s.p, s.q, s.J) == (1200, 2, 4, 3)
    with pytest.raises(ContractError):
        builtin_setting(3)


def test_spec_validation():
    with pytest.raises(ContractError):
        SimSpec([0.0, 1.0], [[0.0] * 3] * 2, [1.0, 1.0])
    with pytest.raises(ContractError):
        SimSpec([0.0, 1.0], [[0.0] * 4] * 2, [1.0, 0.0])
    assert builtin_setting(1).to_dict()["x4_variance_convention"] == "variance"


def test_generate_shapes_and_consistency():
    out = generate(builtin_setting(1, seed=3))
    d = out.dataset
    assert d.n == 1200 and d.X.shape == (1200, 4) and d.W.shape == (1200, 2)
    assert set(np.unique(out.s_true)) <= {1, 2}
    assert check_consistency(out)
    # realized class means recomputed from the stored truth
    mean = np.einsum("ij,ij->i", d.X, out.spec.beta_true[out.s_true - 1])
    assert out.class_cond_means[1] == pytest.approx(mean[out.s_true == 2].mean())


def test_consistency_for_j5():
    spec = SimSpec([0.0, 0.5], [[0.5, 1.0], [0.2, -1.0]], [0.3, 0.6], n=2000, J=5,
                   delta_true=[[0.3, -0.2], [1.0, 0.0]], x_means=(0.0,), x_vars=(1.0,), seed=2)
    out = generate(spec)
    assert check_consistency(out)
    assert set(np.unique(out.dataset.y)) == {1, 2, 3, 4, 5}


def test_same_seed_identical():
    a, b = generate(builtin_setting(2, seed=9)), generate(builtin_setting(2, seed=9))
    np.testing.assert_array_equal(a.dataset.y, b.dataset.y)
    np.testing.assert_array_equal(a.dataset.X, b.dataset.X)
    np.testing.assert_array_equal(a.z_true, b.z_true)


def test_degenerate_membership():
    spec = SimSpec([50.0, 0.0], [[0.0] * 4] * 2, [1.0, 1.0], n=500)
    assert np.all(generate(spec).s_true == 2)


def test_class_share_matches_probit():
    spec = builtin_setting(1, seed=1, n=100_000)
    out = generate(spec)
    # E[Phi(w'alpha)] with w2 ~ N(0,1): Phi(a1 / sqrt(1 + a2^2))
    a1, a2 = spec.alpha_true
    p2 = stats.norm.cdf(a1 / np.sqrt(1 + a2 ** 2))
    se = np.sqrt(p2 * (1 - p2) / spec.n)
    assert abs((out.s_true == 2).mean() - p2) < 3 * se


def test_category_frequencies_match_mixture_probabilities():
    spec = builtin_setting(2, seed=4, n=60_000)
    out = generate(spec)
    d = out.dataset
    theta = ParamDraw(spec.alpha_true, spec.beta_true, spec.sigma2_true, Cutpoints.fixed())
    probs = mixture_outcome_probs(d.X, d.W, theta).mean(axis=0)
    freq = np.bincount(d.y, minlength=4)[1:] / d.n
    se = np.sqrt(probs * (1 - probs) / d.n)
    assert np.all(np.abs(freq - probs) < 2 * se)
