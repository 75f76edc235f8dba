import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from climrisk import marginals as mg
from climrisk.errors import DataError

PARAMS = {
    "poisson": {"lam": 2.5},
    "nb1": {"mu": 3.0, "sigma": 0.7},
    "nb2": {"mu": 3.0, "sigma": 1.5},
    "zip": {"lam": 4.0, "pi": 0.3},
    "lognormal": {"m": -0.5, "s": 0.6},
}


def test_nb1_at_zero():
    assert mg.nb1_pmf(0, 1.0, 1.0) == pytest.approx(0.5, rel=1e-14)


def test_nb1_matches_scipy_nbinom():
    # r = 1/sigma, success prob 1/(1 + sigma*mu)
    mu, sigma = 2.3, 0.4
    y = np.arange(40)
    ref = stats.nbinom.pmf(y, 1 / sigma, 1 / (1 + sigma * mu))
    np.testing.assert_allclose(mg.nb1_pmf(y, mu, sigma), ref, rtol=1e-12)


def test_nb1_poisson_limit():
    y = np.arange(30)
    np.testing.assert_allclose(mg.nb1_pmf(y, 2.0, 1e-8), stats.poisson.pmf(y, 2.0), atol=1e-6)


def test_nb1_log_space_far_tail():
    p = mg.nb1_pmf(500, 1.0, 1.0)
    assert math.isfinite(p) and p > 0


@pytest.mark.parametrize("family", sorted(mg.DISCRETE))
def test_pmf_normalizes(family):
    k = mg._support_bound(family, PARAMS[family])
    total = math.fsum(mg.pmf_or_pdf(family, PARAMS[family], np.arange(k + 1)))
    assert abs(total - 1) < 1e-9


def test_lognormal_pdf_integrates():
    f = lambda y: float(mg.pmf_or_pdf("lognormal", PARAMS["lognormal"], np.array([y]))[0])
    total = integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0]
    assert abs(total - 1) < 1e-6


def test_poisson_closed_form():
    assert mg.pmf_or_pdf("poisson", {"lam": 2.0}, 0) == pytest.approx(math.exp(-2), rel=1e-14)
    assert mg.pmf_or_pdf("poisson", {"lam": 2.0}, 0) == pytest.approx(0.135335, abs=1e-6)


def test_zip_zero_inflation_reduces_to_poisson():
    y = np.arange(20)
    np.testing.assert_array_equal(mg.pmf_or_pdf("zip", {"lam": 3.0, "pi": 0.0}, y),
                                  mg.pmf_or_pdf("poisson", {"lam": 3.0}, y))


@pytest.mark.parametrize("family", sorted(mg.FAMILIES))
def test_cdf_axioms(family):
    p = PARAMS[family]
    grid = np.linspace(0, 60, 241)
    c = mg.cdf(family, p, grid)
    assert np.all(np.diff(c) >= 0)
    assert mg.cdf(family, p, np.inf) == 1.0
    assert 0 <= c[0] <= 1


def test_lognormal_cdf_matches_scipy():
    p = PARAMS["lognormal"]
    z = np.array([0.1, 0.5, 1, 3])
    np.testing.assert_allclose(mg.cdf("lognormal", p, z),
                               stats.lognorm.cdf(z, p["s"], scale=math.exp(p["m"])), rtol=1e-12)


@pytest.mark.parametrize("family", sorted(mg.FAMILIES))
def test_ppf_inverts_cdf(family):
    p = PARAMS[family]
    q = np.array([0.05, 0.3, 0.5, 0.9, 0.999])
    x = mg.ppf(family, p, q)
    assert np.all(mg.cdf(family, p, x) >= q - 1e-12)
    if family in mg.DISCRETE:
        below = mg.cdf(family, p, x - 1)
        assert np.all(below < q)


@pytest.mark.parametrize("bad", [("poisson", {"lam": 0}), ("nb1", {"mu": 1, "sigma": -1}),
                                 ("zip", {"lam": 1, "pi": 1.0}), ("lognormal", {"m": 0, "s": 0}),
                                 ("sichel", {})])
def test_invalid_params(bad):
    with pytest.raises(DataError):
        mg.pmf_or_pdf(bad[0], bad[1], 1)


@pytest.mark.parametrize("family, params", [
    ("nb1", {"mu": 2.0, "sigma": 0.5}), ("nb2", {"mu": 2.0, "sigma": 1.5}),
    ("zip", {"lam": 3.0, "pi": 0.2}), ("poisson", {"lam": 1.7}),
])
def test_mean_variance_identities(family, params):
    draws = mg.sample(family, params, 100_000, np.random.default_rng(1))
    mean, var = mg.mean_var(family, params)
    assert abs(draws.mean() / mean - 1) < 0.02
    assert abs(draws.var() / var - 1) < 0.02


def test_nb1_variance_formula():
    assert mg.mean_var("nb1", {"mu": 2.0, "sigma": 0.5}) == (2.0, 2.0 * (1 + 0.5 * 2.0))


def test_poisson_mle_is_sample_mean():
    y = mg.sample("poisson", {"lam": 3.0}, 200, np.random.default_rng(0))
    fit = mg.fit_mle(y, "poisson")
    assert fit.params["lam"] == y.mean()


def test_nb1_parameter_recovery():
    y = mg.sample("nb1", {"mu": 2.0, "sigma": 0.5}, 10_000, np.random.default_rng(2))
    fit = mg.fit_mle(y, "nb1")
    assert fit.converged
    assert abs(fit.params["mu"] / 2.0 - 1) < 0.1
    assert abs(fit.params["sigma"] / 0.5 - 1) < 0.1


@pytest.mark.parametrize("family", ["nb1", "nb2", "zip", "poisson", "lognormal"])
def test_mle_beats_truth(family):
    y = mg.sample(family, PARAMS[family], 500, np.random.default_rng(4))
    fit = mg.fit_mle(y, family)
    truth = float(np.sum(mg.logpmf_or_pdf(family, PARAMS[family], y)))
    assert fit.loglik >= truth - 1e-9


def test_zip_recovery():
    y = mg.sample("zip", {"lam": 4.0, "pi": 0.3}, 5000, np.random.default_rng(3))
    fit = mg.fit_mle(y, "zip")
    assert fit.params["lam"] == pytest.approx(4.0, rel=0.05)
    assert fit.params["pi"] == pytest.approx(0.3, abs=0.03)


def test_fit_errors():
    with pytest.raises(DataError):
        mg.fit_mle(np.ones(10), "poisson")
    with pytest.raises(DataError):
        mg.fit_mle(np.zeros(50), "lognormal")
    with pytest.raises(DataError):
        mg.fit_mle(np.full(50, 0.5), "nb1")


def test_aic_bic_formulas():
    fit = mg.MarginalFit("nb1", {"mu": 1.0, "sigma": 1.0}, -100.0, 100)
    assert fit.aic == 204.0
    assert fit.bic == pytest.approx(2 * math.log(100) + 200)


def test_tie_prefers_fewer_parameters():
    a = mg.MarginalFit("nb1", {"mu": 1.0, "sigma": 1.0}, -99.0, 50)     # AIC 202
    b = mg.MarginalFit("poisson", {"lam": 1.0}, -100.0, 50)             # AIC 202
    assert mg.best_by_aic([a, b]).family == "poisson"


def test_select_family_needs_two():
    with pytest.raises(DataError):
        mg.select_family(np.arange(40.0), ["poisson"])


@pytest.mark.slow
def test_nb1_beats_poisson_under_overdispersion():
    wins = 0
    for rep in range(100):
        y = mg.sample("nb1", {"mu": 3.0, "sigma": 1.0}, 200, np.random.default_rng([rep, 99]))
        wins += mg.select_family(y, ["poisson", "nb1"]).family == "nb1"
    assert wins >= 95


def test_discretize_and_fit_cdf_scale():
    vals = np.array([0.0012, 0.0029, 0.004])
    np.testing.assert_array_equal(mg.discretize(vals, 1000), [1, 3, 4])
    fit = mg.MarginalFit("poisson", {"lam": 2.0}, -1.0, 40, exposure=1000)
    assert fit.cdf(0.0029) == pytest.approx(mg.cdf("poisson", {"lam": 2.0}, 3))
    with pytest.raises(DataError):
        mg.discretize(vals, 0)


def test_fit_json_roundtrip():
    fit = mg.fit_mle(mg.sample("lognormal", PARAMS["lognormal"], 100, np.random.default_rng(0)), "lognormal")
    back = mg.MarginalFit.from_dict(fit.to_dict())
    assert back.params == fit.params and back.aic == fit.aic and back.bic == fit.bic


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.05, 50), sigma=st.floats(0.01, 5), y=st.integers(0, 400))
def test_nb1_pmf_is_probability(mu, sigma, y):
    p = mg.nb1_pmf(y, mu, sigma)
    assert 0 <= p <= 1
