"""Gumbel copula: distribution function, bivariate density, frailty sampling
and single-parameter estimation from rank pseudo-observations.

Conventions: ``u`` arrays carry the copula dimension on the last axis.
All generator powers are formed as ``exp(theta * log(-log u))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .errors import ConvergenceError, DataError

THETA_MAX = 50.0
DEFAULT_BOOTSTRAP = 500


def _check_theta(theta):
    theta = float(theta)
    if not theta >= 1.0 or not math.isfinite(theta):
        raise DataError(f"Gumbel parameter must satisfy theta >= 1, got {theta}")
    return theta


def theta_to_tau(theta):
    return 1.0 - 1.0 / _check_theta(theta)


def tau_to_theta(tau):
    """Inverse of ``tau = 1 - 1/theta``, floored at independence."""
    if tau >= 1:
        raise DataError(f"Kendall tau must be < 1 for inversion, got {tau}")
    return 1.0 if tau <= 0 else 1.0 / (1.0 - tau)


def _log_generator(u, theta):
    """log((-log u)**theta); -inf where u == 1."""
    with np.errstate(divide="ignore"):
        return theta * np.log(-np.log(u))


def gumbel_cdf(u, theta):
    """C(u) = exp(-(sum_i (-log u_i)**theta)**(1/theta)).

    Any zero coordinate gives 0; coordinates equal to 1 drop out. At
    ``theta == 1`` the product of the coordinates is returned directly.
    """
    theta = _check_theta(theta)
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise DataError("copula arguments must lie in [0, 1]")
    if u.ndim == 0 or u.shape[-1] < 1:
        raise DataError("copula argument needs a trailing dimension")
    if theta == 1.0:
        out = np.prod(u, axis=-1)
        return out if out.ndim else float(out)
    zero = np.any(u == 0, axis=-1)
    safe = np.where(u == 0, 0.5, u)
    lg = _log_generator(safe, theta)
    with np.errstate(divide="ignore"):
        log_t = np.logaddexp.reduce(lg, axis=-1)
        out = np.exp(-np.exp(log_t / theta))
    out = np.where(zero, 0.0, out)
    return out if out.ndim else float(out)


def gumbel_bivariate_logdensity(u, v, theta):
    theta = _check_theta(theta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise DataError("bivariate density needs arguments strictly inside (0, 1)")
    la = np.log(-np.log(u))
    lb = np.log(-np.log(v))
    log_t = np.logaddexp(theta * la, theta * lb)
    t_root = np.exp(log_t / theta)
    return (-t_root - np.log(u) - np.log(v) + (theta - 1.0) * (la + lb)
            + (1.0 / theta - 2.0) * log_t + np.log(t_root + theta - 1.0))


def gumbel_bivariate_density(u, v, theta):
    """Mixed second derivative of the bivariate Gumbel CDF."""
    out = np.exp(gumbel_bivariate_logdensity(u, v, theta))
    return out if out.ndim else float(out)


def positive_stable(alpha, size, rng):
    """Log of positive alpha-stable draws with Laplace transform exp(-s**alpha).

    Kanter's representation (the skewed Chambers-Mallows-Stuck case),
    returned on the log scale because small ``alpha`` overflows doubles.
    """
    if not 0 < alpha <= 1:
        raise DataError(f"stability index must be in (0, 1], got {alpha}")
    if alpha == 1:
        return np.zeros(size)
    v = math.pi * (1.0 - rng.random(size))  # (0, pi]
    v = np.where(v >= math.pi, math.pi * (1 - 1e-16), v)
    w = rng.standard_exponential(size)
    return (np.log(np.sin(alpha * v)) - np.log(np.sin(v)) / alpha
            + (1.0 - alpha) / alpha * (np.log(np.sin((1.0 - alpha) * v)) - np.log(w)))


def sample_gumbel(n, d, theta, seed):
    """``n`` draws of the ``d``-variate Gumbel copula via the stable frailty.

    U_i = exp(-(E_i / S)**(1/theta)) with S positive (1/theta)-stable and
    E_i independent unit exponentials.
    """
    theta = _check_theta(theta)
    if d < 1 or n < 0:
        raise DataError("need n >= 0 and d >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if theta == 1.0:
        return 1.0 - rng.random((n, d))
    alpha = 1.0 / theta
    log_s = positive_stable(alpha, n, rng)
    e = rng.standard_exponential((n, d))
    return np.exp(-np.exp(alpha * (np.log(e) - log_s[:, None])))


def pseudo_observations(Y):
    """Column-wise ranks divided by ``n + 1`` (average ranks for ties)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise DataError("expected an n x d matrix")
    n = Y.shape[0]
    if n < 10:
        raise DataError(f"need at least 10 rows, got {n}")
    const = [j for j in range(Y.shape[1]) if np.all(Y[:, j] == Y[0, j])]
    if const:
        raise DataError(f"constant column(s) {const}")
    return stats.rankdata(Y, method="average", axis=0) / (n + 1.0)


def mean_pairwise_tau(P):
    P = np.asarray(P, dtype=float)
    taus = [stats.kendalltau(P[:, i], P[:, j]).statistic
            for i, j in combinations(range(P.shape[1]), 2)]
    return float(np.mean(taus))


def composite_loglik(P, theta):
    """Sum of bivariate log densities over all column pairs and rows."""
    P = np.asarray(P, dtype=float)
    return float(sum(np.sum(gumbel_bivariate_logdensity(P[:, i], P[:, j], theta))
                     for i, j in combinations(range(P.shape[1]), 2)))


@dataclass
class CopulaFit:
    theta: float
    se: Optional[float]
    estimator: str
    n: int
    d: int
    bootstrap_reps: int
    seed: int

    def to_dict(self):
        return {"theta": self.theta, "se": self.se, "estimator": self.estimator, "n": self.n,
                "d": self.d, "bootstrap_reps": self.bootstrap_reps, "seed": self.seed}

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["theta"]), None if doc.get("se") is None else float(doc["se"]),
                   doc["estimator"], int(doc["n"]), int(doc["d"]),
                   int(doc["bootstrap_reps"]), int(doc["seed"]))


def _check_pseudo(P):
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[1] < 2:
        raise DataError("copula estimation needs an n x d matrix with d >= 2")
    if np.any((P <= 0) | (P >= 1)):
        raise DataError("pseudo-observations must lie strictly inside (0, 1)")
    return P


def _theta_tau(P):
    return tau_to_theta(mean_pairwise_tau(P))


def _theta_cml(P):
    res = optimize.minimize_scalar(lambda th: -composite_loglik(P, th), bounds=(1.0, THETA_MAX),
                                   method="bounded", options={"xatol": 1e-7})
    if not res.success or not np.isfinite(res.fun):
        raise ConvergenceError(f"composite likelihood search failed: {res.message}", trace=res)
    return float(res.x)


def bootstrap_se(P, estimator, reps, seed):
    """Row-bootstrap standard error; replicate ``r`` uses its own spawned stream."""
    if reps < 2:
        return None
    n = P.shape[0]
    streams = np.random.SeedSequence(seed).spawn(reps)
    est = np.empty(reps)
    for r, ss in enumerate(streams):
        idx = np.random.default_rng(ss).integers(0, n, n)
        est[r] = estimator(P[idx])
    return float(np.std(est, ddof=1))


def estimate_theta_tau(P, bootstrap_reps=DEFAULT_BOOTSTRAP, seed=0):
    """theta = 1 / (1 - mean pairwise Kendall tau), floored at 1."""
    P = _check_pseudo(P)
    theta = _theta_tau(P)
    se = bootstrap_se(P, _theta_tau, bootstrap_reps, seed)
    return CopulaFit(theta, se, "tau-inversion", P.shape[0], P.shape[1], bootstrap_reps, seed)


def estimate_theta_cml(P, bootstrap_reps=DEFAULT_BOOTSTRAP, seed=0):
    """Pairwise composite maximum likelihood over theta in [1, 50]."""
    P = _check_pseudo(P)
    theta = _theta_cml(P)
    se = bootstrap_se(P, _theta_cml, bootstrap_reps, seed)
    return CopulaFit(theta, se, "pairwise-composite-ML", P.shape[0], P.shape[1], bootstrap_reps, seed)


ESTIMATORS = {"tau-inversion": estimate_theta_tau, "pairwise-composite-ML": estimate_theta_cml}
