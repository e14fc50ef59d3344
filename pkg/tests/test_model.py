import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, special, stats

from rugbyeffort import _kernels
from rugbyeffort.model import (VARIANTS, ModelConfig, NonFiniteDensityError, ParameterLayout, Posterior,
                               build_abilities, constrain_positive, location, log_likelihood, log_posterior,
                               log_prior, student_t_logpdf, unconstrain_positive)

from .conftest import small_features
from .oracles import central_difference, reference_log_posterior


def random_state(layout, rng):
    theta = rng.normal(0, 0.5, size=layout.size)
    theta[layout.i_log_nu] = math.log(rng.uniform(3, 30))
    theta[layout.i_log_sigma_y] = math.log(rng.uniform(0.3, 2.0))
    theta[layout.sigma_a] = rng.normal(0, 0.1, size=layout.nteams)
    return theta


@pytest.mark.parametrize("variant", VARIANTS)
def test_matches_reference_and_finite_differences(variant):
    fs = small_features(1)
    cfg = ModelConfig(variant=variant)
    post = Posterior(fs, cfg)
    rng = np.random.default_rng(7)
    for _ in range(20):
        theta = random_state(post.layout, rng)
        lp, grad = post.logp_grad(theta)
        assert lp == pytest.approx(reference_log_posterior(theta, fs, cfg), rel=1e-10, abs=1e-10)
        fd = central_difference(lambda x: reference_log_posterior(x, fs, cfg), theta)
        err = np.abs(grad - fd) / np.maximum(1.0, np.abs(fd))
        assert err.max() < 1e-6


@pytest.mark.parametrize("variant", VARIANTS)
def test_numba_and_numpy_paths_agree(variant):
    fs = small_features(2)
    cfg = ModelConfig(variant=variant)
    fast, slow = Posterior(fs, cfg, use_numba=True), Posterior(fs, cfg, use_numba=False)
    rng = np.random.default_rng(3)
    for _ in range(10):
        theta = random_state(fast.layout, rng)
        lp1, g1 = fast.logp_grad(theta)
        lp2, g2 = slow.logp_grad(theta)
        assert lp1 == pytest.approx(lp2, rel=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-12)


def test_prior_plus_likelihood_is_posterior():
    fs = small_features(4)
    cfg = ModelConfig(variant="III")
    theta = random_state(ParameterLayout(cfg, fs.nteams, fs.nweeks), np.random.default_rng(0))
    total = log_prior(theta, fs, cfg) + log_likelihood(theta, fs, cfg)
    assert log_posterior(theta, fs, cfg) == pytest.approx(total, rel=1e-12)
    assert log_prior(theta, fs, cfg) == pytest.approx(reference_log_posterior(theta, fs, cfg, lik=False))


def test_cauchy_special_case():
    assert student_t_logpdf(0.0, 1.0, 0.0, 1.0) == pytest.approx(math.log(1 / math.pi), abs=1e-9)
    assert student_t_logpdf(0.0, 1.0, 0.0, 1.0) == pytest.approx(-1.144729886, abs=1e-9)


@pytest.mark.parametrize("x", [-3.0, -0.5, 0.0, 1.2, 4.0])
def test_large_nu_approaches_normal(x):
    assert student_t_logpdf(x, 1e6, 0.0, 1.0) == pytest.approx(stats.norm.logpdf(x), abs=1e-4)


@given(st.floats(-10, 10), st.floats(0.5, 60), st.floats(-3, 3), st.floats(0.05, 5))
def test_student_t_scale_family(x, nu, loc, scale):
    expected = student_t_logpdf((x - loc) / scale, nu, 0.0, 1.0) - math.log(scale)
    assert student_t_logpdf(x, nu, loc, scale) == pytest.approx(expected, abs=1e-10)
    assert student_t_logpdf(x, nu, loc, scale) == pytest.approx(stats.t.logpdf(x, nu, loc, scale), abs=1e-9)


def _prior_only_state(layout, nu=18.0, sigma_y=1.0, beta=0.5):
    return layout.pack(betas={n: beta for n in layout.config.beta_names}, nu=nu, sigma_y=sigma_y,
                       sigma_a=0.0, eta=np.zeros((layout.nweeks, layout.nteams)))


def test_gamma_prior_closed_form():
    fs = small_features()
    cfg = ModelConfig(variant="I")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    lp18 = log_prior(_prior_only_state(layout, nu=18.0), fs, cfg)
    lp10 = log_prior(_prior_only_state(layout, nu=10.0), fs, cfg)
    # Gamma(9, rate .5) on log scale: 9 log nu - nu/2 (+const)
    expected = 9 * math.log(18) - 9.0 - (9 * math.log(10) - 5.0)
    assert lp18 - lp10 == pytest.approx(expected, abs=1e-10)
    const = 9 * math.log(0.5) - math.lgamma(9)
    gamma_term = const + 8 * math.log(18) - 9.0 + math.log(18)
    rest = lp18 - gamma_term
    lp_other = log_prior(_prior_only_state(layout, nu=5.0), fs, cfg)
    assert lp_other - rest == pytest.approx(const + 9 * math.log(5) - 2.5, abs=1e-10)


def test_beta_at_prior_mean_contributes_standard_normal_peak():
    fs = small_features()
    for variant in VARIANTS:
        cfg = ModelConfig(variant=variant)
        layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
        at_mean = log_prior(_prior_only_state(layout, beta=0.5), fs, cfg)
        base = ModelConfig(variant=variant, beta_sd=1e12)
        # with a huge sd each beta term is exactly -log(1e12 sqrt(2 pi)); the difference isolates the terms
        flat = log_prior(_prior_only_state(layout, beta=0.5), fs, base)
        nb = layout.nbeta
        per_beta = (at_mean - flat) / nb - math.log(1e12 * math.sqrt(2 * math.pi))
        assert per_beta == pytest.approx(math.log(1 / math.sqrt(2 * math.pi)), abs=1e-9)


def test_eta_prior_is_additive():
    fs = small_features()
    cfg = ModelConfig(variant="II")
    post = Posterior(fs, cfg, lik_weight=0.0)
    theta = _prior_only_state(post.layout)
    base = post.log_density(theta)
    i = post.layout.eta.start + 4
    bumped = theta.copy()
    bumped[i] = 0.7
    expected = stats.norm.logpdf(0.7, 0, 0.5) - stats.norm.logpdf(0.0, 0, 0.5)
    assert post.log_density(bumped) - base == pytest.approx(expected, abs=1e-12)


def test_likelihood_translation_invariance():
    # shifting every first-week eta by c shifts all abilities by c; differences stay put
    fs = small_features(5)
    cfg = ModelConfig(variant="II")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    theta = random_state(layout, np.random.default_rng(9))
    shifted = theta.copy()
    shifted[layout.eta.start:layout.eta.start + fs.nteams] += 1.3
    assert log_likelihood(shifted, fs, cfg) == pytest.approx(log_likelihood(theta, fs, cfg), rel=1e-12)


def test_home_away_swap_symmetry():
    fs = small_features(6)
    cfg = ModelConfig(variant="III")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    theta = random_state(layout, np.random.default_rng(11))
    for name in ("b_home", "b_atten", "b_day"):
        theta[cfg.beta_names.index(name)] = 0.0
    swapped = type(fs).from_arrays(
        teams=fs.teams, home_idx=fs.away_idx, away_idx=fs.home_idx, home_week=fs.away_week,
        away_week=fs.home_week, y=-fs.y, eff_home=fs.eff_away, eff_away=fs.eff_home, atten=fs.atten,
        day=fs.day, prevperf=fs.prevperf)
    assert log_likelihood(theta, swapped, cfg) == pytest.approx(log_likelihood(theta, fs, cfg), rel=1e-12)


def test_location_worked_example():
    fs = small_features()
    fs = type(fs).from_arrays(teams=fs.teams, home_idx=[0], away_idx=[1], home_week=[1], away_week=[1], y=[0.0],
                              eff_home=[0.5], eff_away=[0.4], atten=[0], day=[0], prevperf=[0.5, 0.5, 0.5])
    cfg = ModelConfig(variant="I")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    theta = layout.pack(betas={"b_home": 0.324, "b_prev": 1.0, "b_effort": 3.114}, nu=10, sigma_y=1,
                        sigma_a=0.1, eta=np.zeros((1, 3)))
    a = build_abilities(theta, layout, fs.prevperf)
    assert location(fs, a, theta, layout)[0] == pytest.approx(0.6354, abs=1e-12)


def test_abilities_by_hand():
    fs = small_features()
    cfg = ModelConfig(variant="I")
    layout = ParameterLayout(cfg, 3, 4)
    eta = np.arange(12, dtype=float).reshape(4, 3) / 10
    theta = layout.pack(betas={"b_home": 0, "b_prev": 2.0, "b_effort": 0}, nu=10, sigma_y=1,
                        sigma_a=[0.1, 0.2, -0.3], eta=eta)
    a = build_abilities(theta, layout, fs.prevperf)
    assert a[0].tolist() == pytest.approx([2 * 0.2 + 0.0, 2 * 0.9 + 0.1, 2 * 0.5 + 0.2])
    assert a[1, 0] == pytest.approx(a[0, 0] + 0.1 * 0.3)
    assert a[3, 2] == pytest.approx(a[0, 2] - 0.3 * (0.5 + 0.8 + 1.1))
    # constrained output row carries the same abilities
    row = layout.constrain(theta, fs.prevperf)
    names = layout.constrained_names
    assert row[names.index("a[4,3]")] == pytest.approx(a[3, 2])
    assert row[names.index("nu")] == pytest.approx(10.0)


def test_mode_has_vanishing_gradient():
    fs = small_features(8)
    cfg = ModelConfig(variant="II")
    post = Posterior(fs, cfg)
    x0 = _prior_only_state(post.layout, nu=12.0)
    res = optimize.minimize(lambda x: tuple(-v for v in post.logp_grad(x)), x0, jac=True, method="L-BFGS-B",
                            options={"gtol": 1e-10, "ftol": 1e-15, "maxiter": 5000})
    assert np.linalg.norm(post.gradient(res.x)) < 1e-6


@given(st.lists(st.floats(-20, 20), min_size=1, max_size=8))
def test_positive_transform_round_trip(values):
    u = np.array(values)
    np.testing.assert_allclose(unconstrain_positive(constrain_positive(u)), u, atol=1e-12)


def test_unconstrain_rejects_nonpositive():
    with pytest.raises(ValueError):
        unconstrain_positive([1.0, 0.0])


@settings(max_examples=200)
@given(st.floats(1e-3, 500))
def test_digamma_matches_scipy(x):
    assert _kernels.digamma(x) == pytest.approx(special.digamma(x), rel=1e-12, abs=1e-12)


def test_nu_below_floor_is_minus_infinity():
    fs = small_features()
    cfg = ModelConfig(variant="I")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    theta = _prior_only_state(layout, nu=0.05)
    assert Posterior(fs, cfg).log_density(theta) == -math.inf


def test_nonfinite_raises():
    fs = small_features()
    cfg = ModelConfig(variant="I")
    theta = _prior_only_state(ParameterLayout(cfg, fs.nteams, fs.nweeks))
    theta[0] = np.nan
    with pytest.raises(NonFiniteDensityError):
        log_posterior(theta, fs, cfg)


def test_variant_I_ignores_day_covariate():
    fs = small_features(3)
    cfg = ModelConfig(variant="I")
    layout = ParameterLayout(cfg, fs.nteams, fs.nweeks)
    assert "b_day" not in layout.unconstrained_names and "b_atten" not in layout.unconstrained_names
    theta = random_state(layout, np.random.default_rng(1))
    flipped = type(fs).from_arrays(
        teams=fs.teams, home_idx=fs.home_idx, away_idx=fs.away_idx, home_week=fs.home_week,
        away_week=fs.away_week, y=fs.y, eff_home=fs.eff_home, eff_away=fs.eff_away, atten=1 - fs.atten,
        day=1 - fs.day, prevperf=fs.prevperf)
    assert log_posterior(theta, flipped, cfg) == log_posterior(theta, fs, cfg)


def test_variant_layouts():
    sizes = {v: ParameterLayout(ModelConfig(variant=v), 3, 4).nbeta for v in VARIANTS}
    assert sizes == {"I": 3, "II": 4, "III": 5, "IV": 5}
    with pytest.raises(ValueError):
        ModelConfig(variant="V")
