"""Joint exceedance probabilities under a Gumbel copula and risk curves."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .copula import gumbel_cdf, sample_gumbel
from .errors import DataError

RISK_HEADER = ["z", "phi_exact", "phi_mc", "mc_se", "city", "period"]
COMPARE_HEADER = ["z", "phi_a", "phi_b", "ratio", "diff"]
DEFAULT_MC_DRAWS = 100_000


def joint_tail_exact(u, theta):
    """P(U_1 > u_1, ..., U_d > u_d) by inclusion-exclusion over all subsets.

    Each subset term is the Gumbel CDF of the retained coordinates (the
    others set to 1); terms are combined with ``math.fsum``. Independence
    (``theta == 1``) short-circuits to the product of the marginal tails.
    """
    u = np.asarray(u, dtype=float).ravel()
    d = u.size
    if d < 1:
        raise DataError("need at least one coordinate")
    if np.any((u < 0) | (u > 1)):
        raise DataError("marginal probabilities must lie in [0, 1]")
    if float(theta) == 1.0:
        return float(np.prod(1.0 - u))
    terms = [1.0]
    for size in range(1, d + 1):
        sign = -1.0 if size % 2 else 1.0
        for subset in combinations(range(d), size):
            terms.append(sign * gumbel_cdf(u[list(subset)], theta))
    value = math.fsum(terms)
    return min(max(value, 0.0), 1.0)


def joint_tail_mc(u, theta, n=DEFAULT_MC_DRAWS, seed=0):
    """Monte Carlo estimate of the joint exceedance and its binomial standard error."""
    if n < 10_000:
        raise DataError(f"need at least 10000 draws, got {n}")
    u = np.asarray(u, dtype=float).ravel()
    U = sample_gumbel(n, u.size, theta, seed)
    hits = np.all(U > u, axis=1)
    p = float(np.mean(hits))
    return p, math.sqrt(p * (1.0 - p) / n)


@dataclass
class RiskQuery:
    z: np.ndarray
    marginals: list
    copula: object

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1 or self.z.size == 0 or np.any(np.diff(self.z) <= 0):
            raise DataError("threshold grid must be non-empty and strictly increasing")
        if len(self.marginals) != self.copula.d:
            raise DataError(f"{len(self.marginals)} marginals for a {self.copula.d}-dimensional copula")


@dataclass
class RiskCurve:
    z: np.ndarray
    phi_exact: np.ndarray
    phi_mc: np.ndarray
    mc_se: np.ndarray
    city: str = ""
    period: str = "scenario"
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.z)):
            yield [self.z[i], self.phi_exact[i], self.phi_mc[i], self.mc_se[i], self.city, self.period]


def default_z_grid(pooled, points=50, lo_pct=50.0, hi_pct=99.9):
    """Log-spaced thresholds between two percentiles of the pooled predictions."""
    pooled = np.asarray(pooled, dtype=float).ravel()
    lo, hi = np.percentile(pooled, [lo_pct, hi_pct])
    if not lo > 0 or not hi > lo:
        raise DataError(f"cannot build a log grid from percentiles {lo}, {hi}")
    return np.geomspace(lo, hi, points)


def risk_curve(query: RiskQuery, mc_draws=DEFAULT_MC_DRAWS, seed=0, city="", period="scenario"):
    """Exact and Monte Carlo joint exceedance for every threshold.

    ``mc_draws=0`` skips the Monte Carlo channel (columns become NaN). One
    copula sample is shared across the grid, which keeps the MC curve
    monotone as well.
    """
    theta = query.copula.theta
    d = len(query.marginals)
    u = np.column_stack([np.asarray(f.cdf(query.z), dtype=float) for f in query.marginals])
    if np.all(u[0] == 0.0):
        warnings.warn("lowest threshold lies below every marginal support point; phi = 1 there",
                      stacklevel=2)
    exact = np.array([joint_tail_exact(row, theta) for row in u])
    # rounding can break monotonicity by an ulp at the top of the grid
    exact = np.minimum.accumulate(exact)
    if mc_draws:
        U = sample_gumbel(mc_draws, d, theta, seed)
        mc = np.array([np.mean(np.all(U > row, axis=1)) for row in u])
        se = np.sqrt(mc * (1.0 - mc) / mc_draws)
    else:
        mc = np.full(len(query.z), np.nan)
        se = np.full(len(query.z), np.nan)
    return RiskCurve(query.z.copy(), exact, mc, se, city, period,
                     {"theta": theta, "d": d, "mc_draws": mc_draws, "seed": seed})


def control_curve(fit, z, city=""):
    """Univariate exceedance 1 - F(z) for the single observed control series."""
    z = np.asarray(z, dtype=float)
    tail = 1.0 - np.asarray(fit.cdf(z), dtype=float)
    tail = np.minimum.accumulate(np.clip(tail, 0.0, 1.0))
    nan = np.full(z.shape, np.nan)
    return RiskCurve(z.copy(), tail, nan, nan.copy(), city, "control", {"family": fit.family})


@dataclass
class RiskComparison:
    z: np.ndarray
    phi_a: np.ndarray
    phi_b: np.ndarray
    ratio: np.ndarray
    diff: np.ndarray
    dominance: float

    def rows(self):
        for i in range(len(self.z)):
            yield [self.z[i], self.phi_a[i], self.phi_b[i], self.ratio[i], self.diff[i]]


def compare_risk(curve_a: RiskCurve, curve_b: RiskCurve):
    """Per-threshold ratio b/a and difference b - a on a shared grid.

    ``dominance`` is the fraction of thresholds where b exceeds a. The ratio
    is NaN where both are zero and inf where only a is.
    """
    if curve_a.z.shape != curve_b.z.shape or not np.array_equal(curve_a.z, curve_b.z):
        raise DataError("risk curves are on different threshold grids")
    a = curve_a.phi_exact
    b = curve_b.phi_exact
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(a == b, 1.0, b / a)
    return RiskComparison(curve_a.z.copy(), a.copy(), b.copy(), ratio, b - a, float(np.mean(b > a)))


def _fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_risk_csv(path, curves):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_HEADER)
        for curve in curves:
            for row in curve.rows():
                w.writerow([_fmt(v) for v in row])


def _num(text):
    return math.nan if text == "" else float(text)


def read_risk_csv(path):
    """Parse a risk-curve file back into one curve per (city, period)."""
    groups = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != RISK_HEADER:
            raise DataError(f"{path}: header does not match {RISK_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RISK_HEADER):
                raise DataError(f"line {lineno}: expected {len(RISK_HEADER)} fields")
            groups.setdefault((row[4], row[5]), []).append([_num(x) for x in row[:4]])
    curves = []
    for (city, period), rows in groups.items():
        arr = np.array(rows)
        curves.append(RiskCurve(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], city, period))
    return curves


def write_compare_csv(path, comparison):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for row in comparison.rows():
            w.writerow([_fmt(v) for v in row])


def read_compare_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != COMPARE_HEADER:
            raise DataError(f"{path}: header does not match {COMPARE_HEADER}")
        return np.array([[_num(x) for x in row] for row in reader])
