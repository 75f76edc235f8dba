"""Synthetic precipitation/claims worlds with a planted claim link.

A world has one control-period daily stream (precipitation plus claims) and
``n_scenarios`` projection-period precipitation streams whose weekly storm
activity is coupled through a Gumbel copula with parameter ``theta_true``.
Years are 52 weeks long, so ``n_years`` years aggregate to exactly
``52 * n_years`` weeks.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import marginals
from .copula import sample_gumbel
from .errors import ConfigError
from .ingest import DailyRecord, aggregate_weekly

SCENARIO_IDS = (
    "CanESM2-CanRCM4-4.5",
    "CanESM2-CanRCM4-8.5",
    "GFDL-ESM2M-RegCM4-8.5",
    "GFDL-ESM2M-WRF-8.5",
    "MPI-ESM-LR-RegCM4-8.5",
    "HadGEM2-ES-RegCM4-8.5",
)
_PERIOD_CODE = {"control": 0, "scenario": 1}


@dataclass
class WorldConfig:
    seed: int = 0
    n_years: int = 10
    storm_rate: float = 0.8          # events per week
    storm_shape: float = 1.5         # gamma shape of one event's total (mm)
    storm_scale: float = 12.0        # gamma scale of one event's total (mm)
    baseline: float = -1.0
    precip_sens: float = 0.03
    lag1_weight: float = 0.015
    lag2_weight: float = 0.008
    max_daily_weight: float = 0.04
    noise_scale: float = 0.05
    n_scenarios: int = 6
    theta_true: float = 1.327
    trend_multipliers: list = field(default_factory=lambda: [1.0, 1.1, 1.15, 1.2, 1.05, 1.25])
    scenario_ids: list = field(default_factory=lambda: list(SCENARIO_IDS))
    control_start: str = "2002-01-01"
    scenario_start: str = "2021-01-01"

    def __post_init__(self):
        if self.n_years < 1 or self.n_scenarios < 1:
            raise ConfigError("n_years and n_scenarios must be positive")
        if self.storm_rate < 0 or self.storm_shape <= 0 or self.storm_scale <= 0:
            raise ConfigError("storm parameters must be positive (rate may be zero)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")
        if self.theta_true < 1:
            raise ConfigError("theta_true must be >= 1")
        if len(self.trend_multipliers) != self.n_scenarios or len(self.scenario_ids) < self.n_scenarios:
            raise ConfigError("need one trend multiplier and one id per scenario")
        if any(m <= 0 for m in self.trend_multipliers):
            raise ConfigError("trend multipliers must be positive")
        self.scenario_ids = list(self.scenario_ids)[: self.n_scenarios]

    @property
    def n_weeks(self):
        return 52 * self.n_years

    def with_updates(self, **kw):
        return dataclasses.replace(self, **kw)


def _latent_uniforms(config, period, index):
    """Weekly driving uniforms for one stream (scenario streams share a Gumbel draw)."""
    if period == "scenario":
        U = sample_gumbel(config.n_weeks, config.n_scenarios, config.theta_true,
                          np.random.default_rng([config.seed, 11]))
        return U[:, index]
    return 1.0 - np.random.default_rng([config.seed, 10]).random(config.n_weeks)


def gen_daily_precip(config: WorldConfig, period="control", scenario_id=None):
    """Daily precipitation records (claims set to 0).

    Weekly storm counts and total storm mass are both monotone in the
    stream's latent uniform; each storm starts on a random day of its week
    and spreads over 1-3 days with random weights.
    """
    if period not in _PERIOD_CODE:
        raise ConfigError(f"period must be 'control' or 'scenario', got {period!r}")
    if period == "scenario":
        if scenario_id not in config.scenario_ids:
            raise ConfigError(f"unknown scenario_id {scenario_id!r}")
        index = config.scenario_ids.index(scenario_id)
        multiplier = float(config.trend_multipliers[index])
        start = dt.date.fromisoformat(config.scenario_start)
    else:
        index = 0
        multiplier = 1.0
        start = dt.date.fromisoformat(config.control_start)

    n_days = 7 * config.n_weeks
    precip = np.zeros(n_days)
    if config.storm_rate > 0:
        u = _latent_uniforms(config, period, index)
        counts = stats.poisson.ppf(u, config.storm_rate).astype(int)
        rng = np.random.default_rng([config.seed, _PERIOD_CODE[period], index])
        for week in np.nonzero(counts)[0]:
            k = counts[week]
            mass = stats.gamma.ppf(u[week], k * config.storm_shape, scale=config.storm_scale)
            shares = rng.dirichlet(np.full(k, config.storm_shape))
            for amount in mass * shares:
                day0 = 7 * week + int(rng.integers(0, 7))
                span = int(rng.integers(1, 4))
                weights = rng.dirichlet(np.ones(span))
                stop = min(day0 + span, n_days)
                precip[day0:stop] += amount * weights[: stop - day0]
        precip *= multiplier
    return [DailyRecord(start + dt.timedelta(days=i), float(precip[i]), 0.0) for i in range(n_days)]


def claim_mean(series, config: WorldConfig):
    """Noise-free planted link softplus(a + b X_t + c1 X_t-1 + c2 X_t-2 + g D_t)."""
    x = np.asarray(series.x, dtype=float)
    lag1 = np.concatenate([[0.0], x[:-1]])
    lag2 = np.concatenate([[0.0, 0.0], x[:-2]])[: len(x)]
    lin = (config.baseline + config.precip_sens * x + config.lag1_weight * lag1
           + config.lag2_weight * lag2 + config.max_daily_weight * np.asarray(series.d, dtype=float))
    return np.logaddexp(0.0, lin)


def gen_claims(series, config: WorldConfig):
    """Weekly claims: planted mean plus zero-mean Gaussian noise, truncated at 0.

    Lags reaching before the series start are taken as zero precipitation.
    """
    mean = claim_mean(series, config)
    if config.noise_scale == 0:
        return mean
    noise = np.random.default_rng([config.seed, 7]).normal(0.0, config.noise_scale, len(mean))
    return np.maximum(mean + noise, 0.0)


def control_daily(config: WorldConfig):
    """Control-period daily records with claims filled in.

    Every day of week ``t`` carries the weekly claim level, so the weekly
    mean reproduces it.
    """
    days = gen_daily_precip(config, "control")
    weekly = aggregate_weekly(days)
    claims = gen_claims(weekly, config)
    return [dataclasses.replace(r, claims=float(claims[i // 7])) for i, r in enumerate(days)]


def scenario_weekly(config: WorldConfig):
    """``{scenario_id: WeeklySeries}`` for the projection period."""
    return {sid: aggregate_weekly(gen_daily_precip(config, "scenario", sid))
            for sid in config.scenario_ids}


def default_ensemble_margins(d):
    return [("lognormal", {"m": -0.7 + 0.05 * j, "s": 0.5}) for j in range(d)]


def gen_ensemble_predictions(config: WorldConfig, n=None, margins=None):
    """``n x d`` planted-truth predictions: Gumbel(theta_true) pushed through
    the requested inverse CDFs, one ``(family, params)`` pair per column."""
    n = config.n_weeks if n is None else int(n)
    d = config.n_scenarios
    margins = default_ensemble_margins(d) if margins is None else list(margins)
    if len(margins) != d:
        raise ConfigError(f"need {d} margins, got {len(margins)}")
    U = sample_gumbel(n, d, config.theta_true, np.random.default_rng([config.seed, 12]))
    return np.column_stack([marginals.ppf(fam, params, U[:, j]) for j, (fam, params) in enumerate(margins)])
