import math

import numpy as np
import pytest
from scipy.special import eval_hermite

from boxcoxlogit import (
    DomainError,
    LognormalSpec,
    ModelParams,
    SingularInformationError,
    asd_median_effect,
    average_effect,
    avar_lambda_limit_oracle,
    avar_params,
    fisher_info,
    fisher_info_ghq,
    instantaneous_risk_rate,
    median_effect,
    median_effect_avar,
    median_effect_ci,
    sample_size_for_se,
)
from boxcoxlogit.asymptotics import Z975, hermite_rule
from boxcoxlogit.design import SettingSpec, derive_truth, generate_dataset, table1_settings
from boxcoxlogit.estimation import fit_mle

from _oracles import bc_direct

NHANES = ModelParams(-2.469, -0.317, 0.392)
NHANES_MU = -0.12


# --- quadrature rule ------------------------------------------------------------

@pytest.mark.parametrize("m", [2, 5, 10, 20, 40])
def test_hermite_weights_match_closed_form(m):
    t, w = hermite_rule(m)
    # nodes are roots of H_m: the Newton correction H_m / H_m' is negligible
    newton = eval_hermite(m, t) / (2 * m * eval_hermite(m - 1, t))
    assert np.abs(newton).max() < 1e-12
    ref = 2.0 ** (m - 1) * math.factorial(m) * np.sqrt(np.pi) / (m**2 * eval_hermite(m - 1, t) ** 2)
    np.testing.assert_allclose(w, ref, rtol=1e-9)


def test_hermite_rule_integrates_polynomials_exactly():
    t, w = hermite_rule(8)
    # int exp(-t^2) t^(2k) dt = Gamma(k + 1/2)
    for k in range(8):
        assert w @ t ** (2 * k) == pytest.approx(math.gamma(k + 0.5), rel=1e-12)


def test_hermite_rule_rejects_tiny_m():
    with pytest.raises(ValueError):
        hermite_rule(1)
    with pytest.raises(ValueError):
        fisher_info_ghq(NHANES, LognormalSpec(0, 1), nodes=1)


# --- effects ----------------------------------------------------------------------

def test_median_and_average_effect_values():
    p = ModelParams(0.0, 1.0, 2.0)
    assert average_effect(p, LognormalSpec(0.0, 1.0), 0.0) == pytest.approx(np.e**2)
    assert median_effect(p, 0.0, 0.0) == 1.0
    assert median_effect(p, 0.7, 2.0) == 1.0
    assert average_effect(p, LognormalSpec(0.7, 1.3), 2.0) == 1.0
    d = LognormalSpec(-0.5, 0.8)
    for q in (0.0, 0.5, 1.5):
        ratio = average_effect(p, d, q) / median_effect(p, d.mu, q)
        assert ratio == pytest.approx(np.exp((2.0 - q) ** 2 * 0.64 / 2))


def test_median_effect_from_fitted_coefficients():
    # beta1 * exp((lam - q) mu) at the rounded published estimates
    assert median_effect(NHANES, NHANES_MU, 1.0) == pytest.approx(-0.3409929, abs=1e-6)
    assert median_effect(NHANES, NHANES_MU, 0.0) == pytest.approx(-0.3024336, abs=1e-6)


# --- information -------------------------------------------------------------------

def test_information_at_zero_slope():
    b0 = -1.3
    p = ModelParams(b0, 0.0, 0.7)
    info = fisher_info_ghq(p, LognormalSpec(0.2, 0.9)).entries
    c = np.exp(b0) / (1 + np.exp(b0)) ** 2
    assert info[0, 0] == pytest.approx(c, rel=1e-13)
    assert info[2, 2] == 0.0 and info[0, 2] == 0.0
    with pytest.raises(SingularInformationError):
        avar_params(p, LognormalSpec(0.2, 0.9))


def _mc_information(params, dist, draws, seed, chunk=1_000_000):
    rng = np.random.default_rng(seed)
    s1 = np.zeros((3, 3))
    s2 = np.zeros((3, 3))
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        x = np.exp(dist.mu + dist.sigma * rng.standard_normal(k))
        lam = params.lam
        nu = bc_direct(x, lam)
        dnu = (x**lam * np.log(x) - nu) / lam
        eta = params.beta0 + params.beta1 * nu
        pq = np.exp(-np.logaddexp(0, eta) - np.logaddexp(0, -eta))
        g = np.stack([np.ones(k), nu, params.beta1 * dnu])
        terms = pq * g[:, None, :] * g[None, :, :]
        s1 += terms.sum(-1)
        s2 += (terms**2).sum(-1)
        done += k
    mean = s1 / draws
    se = np.sqrt((s2 / draws - mean**2) / draws)
    return mean, se


@pytest.mark.slow
def test_ghq_matches_monte_carlo():
    truth, dist = derive_truth(SettingSpec(1.0, 0.5, 0.1, 2.0))
    info = fisher_info_ghq(truth, dist)
    assert info.converged
    mc, se = _mc_information(truth, dist, 10_000_000, seed=42)
    z = np.abs(info.entries - mc) / se
    assert z.max() < 3.0 + 0.5  # nine correlated comparisons


def test_ghq_doubling_check_passes_exactly_when_lambda_sigma_is_small():
    # 64 nodes resolve the integrands only while lam * sigma <= 0.5
    for s in table1_settings():
        truth, dist = derive_truth(s)
        assert fisher_info_ghq(truth, dist).converged == (s.lam * s.sigma <= 0.5), s.id


def test_auto_route_agrees_with_adaptive_everywhere():
    for s in table1_settings()[::5]:
        truth, dist = derive_truth(s)
        auto = fisher_info(truth, dist).entries
        adapt = fisher_info(truth, dist, method="adaptive").entries
        scale = np.sqrt(np.outer(np.diag(adapt), np.diag(adapt)))
        assert np.max(np.abs(auto - adapt) / scale) < 1e-6, s.id


def test_ghq_flag_fails_on_sharp_integrands():
    truth, dist = derive_truth(SettingSpec(2.0, 2.0, 0.1, 5.0))
    info = fisher_info_ghq(truth, dist)
    assert not info.converged
    assert fisher_info(truth, dist).method == "adaptive"


def test_fisher_info_rejects_unknown_method():
    with pytest.raises(ValueError):
        fisher_info(NHANES, LognormalSpec(0, 1), method="simpson")


def test_avar_symmetric_positive_definite():
    for s in table1_settings()[::7]:
        truth, dist = derive_truth(s)
        av = avar_params(truth, dist)
        assert np.array_equal(av, av.T)
        assert np.linalg.eigvalsh(av).min() > 0


# --- small-slope limit ---------------------------------------------------------------

def test_limit_oracle_sequence_converges():
    dist = LognormalSpec(0.0, 1.0)
    target = avar_lambda_limit_oracle(-3.0, 1.0, dist)
    errs = []
    for b1 in (1e-2, 1e-3, 1e-4):
        av = avar_params(ModelParams(-3.0, b1, 1.0), dist, method="ghq")
        errs.append(abs(b1**2 * av[2, 2] / target - 1))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01


def test_limit_oracle_matches_adaptive_at_other_points():
    for b0, lam, mu, sig in [(-1.0, 0.5, 0.3, 0.6), (-2.0, 1.5, -0.5, 0.4)]:
        dist = LognormalSpec(mu, sig)
        b1 = 1e-4
        av = avar_params(ModelParams(b0, b1, lam), dist, method="adaptive")
        assert b1**2 * av[2, 2] == pytest.approx(avar_lambda_limit_oracle(b0, lam, dist), rel=0.01)


def test_limit_oracle_structure():
    dist = LognormalSpec(0.0, 1.0)
    with pytest.raises(DomainError):
        avar_lambda_limit_oracle(-3.0, 0.0, dist)
    # depends on beta0 only through 1 / c with c = e^b0 / (1 + e^b0)^2
    c = lambda b: np.exp(b) / (1 + np.exp(b)) ** 2
    r = avar_lambda_limit_oracle(-3.0, 1.0, dist) / avar_lambda_limit_oracle(0.0, 1.0, dist)
    assert r == pytest.approx(c(0.0) / c(-3.0), rel=1e-12)
    vals = [avar_lambda_limit_oracle(-3.0, 1.0, LognormalSpec(0.0, s)) for s in (0.5, 1.0, 1.5, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def _halving_ratio(b0, b1, lam, dist):
    a1 = avar_params(ModelParams(b0, b1, lam), dist)[2, 2]
    a2 = avar_params(ModelParams(b0, b1 / 2, lam), dist)[2, 2]
    return a2 / a1


@pytest.mark.parametrize("b0,lam,mu,sigma", [(-1.0, 0.5, 0.0, 0.5), (-3.0, 0.5, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0)])
def test_halving_small_slope_quadruples_avar(b0, lam, mu, sigma):
    for b1 in (1e-2, 5e-3):
        assert _halving_ratio(b0, b1, lam, LognormalSpec(mu, sigma)) == pytest.approx(4.0, rel=0.10)


def test_halving_ratio_approaches_four_more_slowly_for_large_lambda_sigma():
    dist = LognormalSpec(0.0, 1.0)
    ratios = [_halving_ratio(-3.0, b1, 1.0, dist) for b1 in (1e-2, 5e-3, 2.5e-3, 1e-3)]
    assert ratios[0] > 4.4  # not yet in the asymptotic regime at 1e-2
    assert all(abs(b - 4) < abs(a - 4) for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] == pytest.approx(4.0, rel=0.02)


# --- planning numbers -----------------------------------------------------------------

def test_planning_weakest_setting():
    truth, dist = derive_truth(SettingSpec(0.5, 0.0, 0.02, 1.1))
    asd = np.sqrt(avar_params(truth, dist)[2, 2])
    assert asd == pytest.approx(700, rel=0.05)
    assert sample_size_for_se(700.0) == pytest.approx(31_360_000)


def test_common_disease_needs_under_a_quarter_of_the_sample():
    t1, d1 = derive_truth(SettingSpec(0.5, 0.0, 0.02, 1.1))
    t2, d2 = derive_truth(SettingSpec(0.5, 0.0, 0.1, 1.1))
    n1 = sample_size_for_se(np.sqrt(avar_params(t1, d1)[2, 2]))
    n2 = sample_size_for_se(np.sqrt(avar_params(t2, d2)[2, 2]))
    assert n2 < n1 / 4


def test_smallest_planning_sample_over_the_design():
    asds = {}
    for s in table1_settings():
        truth, dist = derive_truth(s)
        asds[s.id] = np.sqrt(avar_params(truth, dist)[2, 2])
    best = min(asds, key=asds.get)
    assert best == "P2-R3-L0-S2"
    assert asds[best] == pytest.approx(2.914, rel=0.02)
    assert sample_size_for_se(2.914) == pytest.approx(543.5, abs=0.5)


# --- delta method ----------------------------------------------------------------------

def test_delta_method_reductions():
    cov = np.array([[0.04, 0.0], [0.0, 0.09]])
    # mu = 0: only the slope variance survives
    assert median_effect_avar(1.7, 0.4, 0.0, 1.0, cov) == pytest.approx(0.04)
    # textbook form se^2 = D^2 (v11/b1^2 + 2 mu v12/b1 + mu^2 v22)
    b1, lam, mu, q = -0.8, 0.6, 0.4, 0.0
    cov = np.array([[0.03, -0.01], [-0.01, 0.05]])
    D = median_effect(ModelParams(0, b1, lam), mu, q)
    ref = D**2 * (cov[0, 0] / b1**2 + 2 * mu * cov[0, 1] / b1 + mu**2 * cov[1, 1])
    assert median_effect_avar(b1, lam, mu, q, cov) == pytest.approx(ref, rel=1e-12)
    # zero slope stays finite
    assert np.isfinite(median_effect_avar(0.0, lam, mu, q, cov))


@pytest.fixture(scope="module")
def strong_fit():
    truth, dist = derive_truth(SettingSpec(1.0, 1.0, 0.1, 5.0))
    d = generate_dataset(truth, dist, 5000, 77)
    return truth, dist, fit_mle(d)


def test_median_effect_ci_structure(strong_fit):
    _, dist, fit = strong_fit
    est = median_effect_ci(fit, dist.mu, 1.0)
    assert est.value == pytest.approx(median_effect(fit.params, dist.mu, 1.0))
    assert est.ci_lower == pytest.approx(est.value - Z975 * est.se)
    assert est.ci_upper == pytest.approx(est.value + Z975 * est.se)


def test_median_effect_se_matches_parametric_bootstrap(strong_fit):
    _, dist, fit = strong_fit
    q = 0.5
    est = median_effect_ci(fit, dist.mu, q)
    rng = np.random.default_rng(5)
    draws = rng.multivariate_normal(fit.params.as_array()[1:], fit.cov[1:, 1:], 100_000)
    boot = draws[:, 0] * np.exp((draws[:, 1] - q) * dist.mu)
    assert est.se == pytest.approx(boot.std(), rel=0.02)


def test_asd_median_effect_consistent_with_avar():
    truth, dist = derive_truth(SettingSpec(1.0, 0.5, 0.1, 2.0))
    av = avar_params(truth, dist)
    b1 = truth.beta1
    asd = asd_median_effect(truth, dist, 0.5, av)
    # at q = lam the gradient is (1, mu * beta1)
    ref = av[1, 1] + 2 * dist.mu * b1 * av[1, 2] + (dist.mu * b1) ** 2 * av[2, 2]
    assert asd == pytest.approx(np.sqrt(ref), rel=1e-12)


def test_asd_median_effect_nondecreasing_in_q():
    qs = np.arange(9) * 0.25
    for s in table1_settings()[::3]:
        truth, dist = derive_truth(s)
        av = avar_params(truth, dist)
        vals = [asd_median_effect(truth, dist, q, av) for q in qs]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:])), s.id


# --- risk rate --------------------------------------------------------------------------

def test_risk_rate_matches_finite_difference():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = ModelParams(rng.uniform(-3, 1), rng.uniform(-2, 2), rng.uniform(0, 2))
        x = np.exp(rng.normal())
        h = 1e-5 * x

        def risk(t):
            return 1 / (1 + np.exp(-(p.beta0 + p.beta1 * bc_direct(t, p.lam))))

        fd = (risk(x + h) - risk(x - h)) / (2 * h)
        assert instantaneous_risk_rate(p, x) == pytest.approx(fd, abs=1e-6)


def test_risk_rate_special_values():
    assert instantaneous_risk_rate(ModelParams(-1, 0.0, 0.5), 3.0) == 0.0
    c = np.exp(-2.469) / (1 + np.exp(-2.469)) ** 2
    assert instantaneous_risk_rate(NHANES, 1.0) == pytest.approx(-0.317 * c, rel=1e-12)
    assert instantaneous_risk_rate(NHANES, 1.0) == pytest.approx(-0.022, abs=1e-3)
    out = instantaneous_risk_rate(NHANES, np.array([0.5, 1.0]))
    assert out.shape == (2,)
    with pytest.raises(DomainError):
        instantaneous_risk_rate(NHANES, 0.0)
