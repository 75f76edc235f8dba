"""Univariate claim-frequency families and maximum-likelihood fitting.

Families and parameters:

=========  ==========  ===============================================
tag        params      notes
=========  ==========  ===============================================
poisson    lam
nb1        mu, sigma   mean mu, variance mu * (1 + sigma * mu)
nb2        mu, sigma   mean mu, variance mu * (1 + sigma)
zip        lam, pi     zero-inflated Poisson, P(structural zero) = pi
lognormal  m, s        log-scale location and scale; continuous
=========  ==========  ===============================================

All likelihoods are evaluated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import ConvergenceError, DataError

FAMILIES = {
    "poisson": ("lam",),
    "nb1": ("mu", "sigma"),
    "nb2": ("mu", "sigma"),
    "zip": ("lam", "pi"),
    "lognormal": ("m", "s"),
}
DISCRETE = frozenset({"poisson", "nb1", "nb2", "zip"})
MIN_SAMPLE = 30
_LOG_2PI = math.log(2.0 * math.pi)


def _check_family(family):
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")


def check_params(family, params):
    _check_family(family)
    names = FAMILIES[family]
    missing = [k for k in names if k not in params]
    if missing:
        raise DataError(f"{family}: missing parameters {missing}")
    p = {k: float(params[k]) for k in names}
    ok = {
        "poisson": lambda: p["lam"] > 0,
        "nb1": lambda: p["mu"] > 0 and p["sigma"] > 0,
        "nb2": lambda: p["mu"] > 0 and p["sigma"] > 0,
        "zip": lambda: p["lam"] > 0 and 0 <= p["pi"] < 1,
        "lognormal": lambda: p["s"] > 0 and math.isfinite(p["m"]),
    }[family]()
    if not ok or not all(math.isfinite(v) for v in p.values()):
        raise DataError(f"{family}: invalid parameters {p}")
    return p


def _counts(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise DataError("discrete families need non-negative integer values")
    return y


def _poisson_logpmf(y, lam):
    return special.xlogy(y, lam) - lam - special.gammaln(y + 1.0)


def _negbin_logpmf(y, r, log_q, log_p):
    # q: success-complement probability raised to y, p raised to r
    return (special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1.0)
            + y * log_q + r * log_p)


def nb1_logpmf(y, mu, sigma):
    """Log of Γ(y+1/σ)/(Γ(1/σ)Γ(y+1)) (σμ/(1+σμ))^y (1/(1+σμ))^(1/σ)."""
    y = _counts(y)
    check_params("nb1", {"mu": mu, "sigma": sigma})
    sm = sigma * mu
    return _negbin_logpmf(y, 1.0 / sigma, math.log(sm) - math.log1p(sm), -math.log1p(sm))


def nb1_pmf(y, mu, sigma):
    return np.exp(nb1_logpmf(y, mu, sigma))


def logpmf_or_pdf(family, params, y):
    """Log probability (discrete families) or log density (lognormal)."""
    p = check_params(family, params)
    if family == "lognormal":
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DataError("lognormal density needs positive values")
        z = (np.log(y) - p["m"]) / p["s"]
        return -np.log(y) - math.log(p["s"]) - 0.5 * _LOG_2PI - 0.5 * z * z
    y = _counts(y)
    if family == "poisson":
        return _poisson_logpmf(y, p["lam"])
    if family == "nb1":
        return nb1_logpmf(y, p["mu"], p["sigma"])
    if family == "nb2":
        r = p["mu"] / p["sigma"]
        return _negbin_logpmf(y, r, math.log(p["sigma"]) - math.log1p(p["sigma"]), -math.log1p(p["sigma"]))
    # zip
    lam, pi = p["lam"], p["pi"]
    base = _poisson_logpmf(y, lam)
    with np.errstate(divide="ignore"):
        log_keep = math.log1p(-pi)
        zero = np.logaddexp(math.log(pi) if pi > 0 else -np.inf, log_keep - lam)
    return np.where(y == 0, zero, log_keep + base)


def pmf_or_pdf(family, params, y):
    return np.exp(logpmf_or_pdf(family, params, y))


def mean_var(family, params):
    p = check_params(family, params)
    if family == "poisson":
        return p["lam"], p["lam"]
    if family == "nb1":
        return p["mu"], p["mu"] * (1 + p["sigma"] * p["mu"])
    if family == "nb2":
        return p["mu"], p["mu"] * (1 + p["sigma"])
    if family == "zip":
        lam, pi = p["lam"], p["pi"]
        return (1 - pi) * lam, (1 - pi) * lam * (1 + pi * lam)
    m, s = p["m"], p["s"]
    return math.exp(m + s * s / 2), math.expm1(s * s) * math.exp(2 * m + s * s)


def _support_bound(family, params, tail=1e-13):
    """Upper count K with P(Y > K) well below ``tail``."""
    mean, var = mean_var(family, params)
    sd = math.sqrt(var)
    k = int(math.ceil(mean + 12 * sd + 50))
    while True:
        total = float(np.sum(pmf_or_pdf(family, params, np.arange(k + 1))))
        if 1.0 - total < tail or k > 10_000_000:
            return k
        k *= 2


def cdf(family, params, y):
    """P(Y <= y). Discrete families sum the pmf up to floor(y)."""
    p = check_params(family, params)
    y = np.asarray(y, dtype=float)
    if family == "lognormal":
        with np.errstate(divide="ignore"):
            z = (np.log(np.where(y > 0, y, 1.0)) - p["m"]) / (p["s"] * math.sqrt(2.0))
        out = 0.5 * special.erfc(-z)
        return np.where(y > 0, out, 0.0)
    k = np.floor(y)
    finite = np.isfinite(k) & (k >= 0)
    out = np.where(k < 0, 0.0, 1.0)
    if np.any(finite):
        top = int(np.max(k[finite]))
        top = min(top, _support_bound(family, p))
        cum = np.minimum(np.cumsum(pmf_or_pdf(family, p, np.arange(top + 1))), 1.0)
        idx = np.clip(k[finite], 0, top).astype(int)
        vals = cum[idx]
        # beyond the support bound the remaining mass is negligible
        vals = np.where(k[finite] > top, 1.0, vals)
        out = out.astype(float)
        out[finite] = vals
    return out if out.ndim else float(out)


def ppf(family, params, q):
    """Inverse CDF; smallest support point with cdf >= q for discrete families."""
    p = check_params(family, params)
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise DataError("probabilities must lie in [0, 1]")
    if family == "lognormal":
        return np.exp(p["m"] + p["s"] * special.ndtri(q))
    top = _support_bound(family, p)
    cum = np.cumsum(pmf_or_pdf(family, p, np.arange(top + 1)))
    cum[-1] = max(cum[-1], 1.0)
    out = np.searchsorted(cum, q, side="left").astype(float)
    return np.where(q >= 1.0, np.inf, out)


def sample(family, params, size, rng):
    p = check_params(family, params)
    if family == "poisson":
        return rng.poisson(p["lam"], size).astype(float)
    if family == "nb1":
        # gamma-Poisson mixture with shape 1/sigma, scale sigma*mu
        lam = rng.gamma(1.0 / p["sigma"], p["sigma"] * p["mu"], size)
        return rng.poisson(lam).astype(float)
    if family == "nb2":
        lam = rng.gamma(p["mu"] / p["sigma"], p["sigma"], size)
        return rng.poisson(lam).astype(float)
    if family == "zip":
        keep = rng.random(size) >= p["pi"]
        return np.where(keep, rng.poisson(p["lam"], size), 0).astype(float)
    return rng.lognormal(p["m"], p["s"], size)


@dataclass
class MarginalFit:
    family: str
    params: dict
    loglik: float
    n: int
    exposure: float = 1.0
    converged: bool = True
    k: int = field(init=False)
    aic: float = field(init=False)
    bic: float = field(init=False)

    def __post_init__(self):
        self.k = len(FAMILIES[self.family])
        self.aic = 2 * self.k - 2 * self.loglik
        self.bic = self.k * math.log(self.n) - 2 * self.loglik

    def cdf(self, z):
        """CDF on the original (unscaled) prediction scale."""
        z = np.asarray(z, dtype=float)
        if self.family in DISCRETE:
            return cdf(self.family, self.params, np.rint(z * self.exposure))
        return cdf(self.family, self.params, z)

    def density(self, z):
        """Density (lognormal) or pmf mass of the rounded point (discrete)."""
        z = np.asarray(z, dtype=float)
        if self.family in DISCRETE:
            return pmf_or_pdf(self.family, self.params, np.rint(np.maximum(z, 0) * self.exposure))
        out = np.zeros_like(z)
        pos = z > 0
        out[pos] = pmf_or_pdf(self.family, self.params, z[pos])
        return out

    def to_dict(self):
        return {"family": self.family, "params": dict(self.params), "loglik": self.loglik,
                "aic": self.aic, "bic": self.bic, "n": self.n, "exposure": self.exposure}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["family"], dict(doc["params"]), float(doc["loglik"]), int(doc["n"]),
                   float(doc.get("exposure", 1.0)))


def discretize(values, exposure=1.0):
    """Rescale continuous predictions by ``exposure`` and round to counts."""
    if exposure <= 0:
        raise DataError("exposure factor must be positive")
    return np.rint(np.asarray(values, dtype=float) * exposure)


def _loglik(family, params, y):
    return float(np.sum(logpmf_or_pdf(family, params, y)))


# unconstrained <-> natural parameter maps for the iterative fits
def _unpack(family, theta):
    a, b = theta
    if family in ("nb1", "nb2"):
        return {"mu": math.exp(a), "sigma": math.exp(b)}
    return {"lam": math.exp(a), "pi": float(special.expit(b))}


def _start(family, y):
    mean = max(float(np.mean(y)), 1e-3)
    var = float(np.var(y))
    if family == "nb1":
        return [math.log(mean), math.log(max((var - mean) / mean**2, 1e-2))]
    if family == "nb2":
        return [math.log(mean), math.log(max(var / mean - 1.0, 1e-2))]
    zero_frac = float(np.mean(y == 0))
    pos = y[y > 0]
    lam = float(np.mean(pos)) if pos.size else mean
    pi = min(max(zero_frac - math.exp(-lam), 1e-2), 0.9)
    return [math.log(lam), float(special.logit(pi))]


def _mean_nll(theta, family, y):
    """Mean negative log-likelihood and its gradient in unconstrained coordinates."""
    a_, b_ = theta
    if family in ("nb1", "nb2"):
        if family == "nb1":
            r, a = math.exp(-b_), math.exp(a_ + b_)
        else:
            r, a = math.exp(a_ - b_), math.exp(b_)
        log1pa = math.log1p(a)
        ll = (special.gammaln(y + r) - special.gammaln(r) - special.gammaln(y + 1.0)
              + y * math.log(a) - (y + r) * log1pa)
        d_r = float(np.mean(special.digamma(y + r))) - special.digamma(r) - log1pa
        d_a = float(np.mean(y)) / a - (float(np.mean(y)) + r) / (1.0 + a)
        if family == "nb1":
            grad = [d_a * a, -d_r * r + d_a * a]
        else:
            grad = [d_r * r, -d_r * r + d_a * a]
        return -float(np.mean(ll)), -np.array(grad)
    lam, pi = math.exp(a_), float(special.expit(b_))
    zero = y == 0
    e = math.exp(-lam)
    dz = pi + (1.0 - pi) * e
    ll = np.where(zero, math.log(dz), math.log1p(-pi) + _poisson_logpmf(y, lam))
    d_lam = np.where(zero, -(1.0 - pi) * e / dz, y / lam - 1.0)
    d_pi = np.where(zero, (1.0 - e) / dz, -1.0 / (1.0 - pi))
    grad = [float(np.mean(d_lam)) * lam, float(np.mean(d_pi)) * pi * (1.0 - pi)]
    return -float(np.mean(ll)), -np.array(grad)


_BOUNDS = {
    "nb1": [(-20.0, 20.0), (-20.0, 10.0)],
    "nb2": [(-20.0, 20.0), (-20.0, 10.0)],
    "zip": [(-20.0, 20.0), (-30.0, 30.0)],
}


def fit_mle(sample_values, family, exposure=1.0):
    """Maximum-likelihood fit of one family.

    Poisson and lognormal use their closed-form MLEs; the two-parameter
    count families run L-BFGS-B on log/logit-transformed parameters.
    ``exposure`` is recorded on the result so that :meth:`MarginalFit.cdf`
    maps back to the prediction scale; the sample must already be scaled.
    """
    _check_family(family)
    y = np.asarray(sample_values, dtype=float).ravel()
    n = y.size
    if n < MIN_SAMPLE:
        raise DataError(f"need at least {MIN_SAMPLE} observations, got {n}")
    if not np.all(np.isfinite(y)):
        raise DataError("sample contains non-finite values")

    if family == "lognormal":
        if np.any(y <= 0):
            raise DataError("lognormal fit needs strictly positive values")
        logs = np.log(y)
        s = float(np.std(logs))
        if s == 0:
            raise DataError("lognormal fit needs a non-constant sample")
        params = {"m": float(np.mean(logs)), "s": s}
        return MarginalFit(family, params, _loglik(family, params, y), n, exposure)

    y = _counts(y)
    if family == "poisson":
        lam = float(np.mean(y))
        if lam <= 0:
            raise DataError("poisson fit needs a sample with a positive mean")
        params = {"lam": lam}
        return MarginalFit(family, params, _loglik(family, params, y), n, exposure)

    if np.all(y == 0):
        raise DataError(f"{family} fit needs at least one positive count")

    res = optimize.minimize(_mean_nll, _start(family, y), args=(family, y), jac=True,
                            method="L-BFGS-B", bounds=_BOUNDS[family])
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError(f"{family} fit did not converge: {res.message}", trace=res)
    params = _unpack(family, res.x)
    return MarginalFit(family, params, -float(res.fun), n, exposure)


def fit_families(sample_values, families, exposure=1.0):
    return [fit_mle(sample_values, f, exposure) for f in families]


def select_family(sample_values, families, exposure=1.0):
    """Fit every family and return the minimum-AIC fit.

    Ties go to the family with fewer parameters, then to list order.
    """
    if len(families) < 2:
        raise DataError("select_family needs at least two candidate families")
    fits = fit_families(sample_values, families, exposure)
    return best_by_aic(fits)


def best_by_aic(fits):
    order = sorted(range(len(fits)), key=lambda i: (fits[i].aic, fits[i].k, i))
    return fits[order[0]]
