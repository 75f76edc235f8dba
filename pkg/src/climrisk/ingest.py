"""Daily CSV parsing, weekly aggregation and lagged design matrices."""

from __future__ import annotations

import csv
import datetime as dt
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

MAX_LAG = 5
DAILY_HEADER = ["date", "precip_mm", "claims"]
WEEKLY_HEADER = ["week_start", "x", "d", "n"]
SCENARIO_HEADER = ["week_start", "scenario_id", "x", "d"]

_COLUMN_RE = re.compile(r"^([XD])_\{?t(?:[-−](\d+))?\}?$")


@dataclass(frozen=True)
class DailyRecord:
    date: dt.date
    precip_mm: float
    claims: float
    insured: Optional[int] = None


@dataclass
class WeeklySeries:
    """Contiguous weekly observations.

    ``n`` is NaN throughout for projection-period series, which carry
    precipitation only.
    """

    week_start: list
    x: np.ndarray
    d: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.n = np.asarray(self.n, dtype=float)
        k = len(self.week_start)
        if not (len(self.x) == len(self.d) == len(self.n) == k):
            raise DataError("weekly series fields differ in length")

    def __len__(self):
        return len(self.week_start)

    def slice(self, start, stop=None):
        s = slice(start, stop)
        return WeeklySeries(self.week_start[s], self.x[s], self.d[s], self.n[s])


@dataclass
class FeatureFrame:
    """Lagged design matrix for one candidate model.

    ``rows`` holds raw (unscaled) features; ``design()`` applies the stored
    scaler. Scaler statistics come from the training rows only.
    """

    columns: list
    rows: np.ndarray
    target: np.ndarray
    scaler_mean: np.ndarray
    scaler_sd: np.ndarray
    week_start: list = field(default_factory=list)

    def __len__(self):
        return self.rows.shape[0]

    def design(self):
        return (self.rows - self.scaler_mean) / self.scaler_sd

    def take(self, index):
        return FeatureFrame(
            columns=list(self.columns),
            rows=self.rows[index],
            target=self.target[index],
            scaler_mean=self.scaler_mean,
            scaler_sd=self.scaler_sd,
            week_start=list(np.asarray(self.week_start, dtype=object)[index]),
        )


def parse_column(name):
    """Return ``(variable, lag)`` for names like ``X_t``, ``D_t-2`` or ``X_{t-1}``."""
    m = _COLUMN_RE.match(name.strip())
    if m is None:
        raise DataError(f"unknown feature column {name!r}")
    lag = int(m.group(2)) if m.group(2) is not None else 0
    if lag > MAX_LAG:
        raise DataError(f"column {name!r}: lag {lag} exceeds maximum {MAX_LAG}")
    return m.group(1), lag


def column_name(var, lag):
    return f"{var}_t" if lag == 0 else f"{var}_t-{lag}"


def canonical_columns(columns):
    return [column_name(*parse_column(c)) for c in columns]


def _parse_float(text, what, lineno):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {lineno}: cannot parse {what} {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {lineno}: {what} is not finite")
    return value


def parse_daily_csv(path):
    """Read a ``date,precip_mm,claims[,insured]`` file.

    Claims are divided by ``insured`` when that column is present.
    """
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_insured = header == DAILY_HEADER + ["insured"]
        if header != DAILY_HEADER and not has_insured:
            raise DataError(f"{path}: header {header} does not match {DAILY_HEADER}[,insured]")
        width = len(header)
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"line {lineno}: expected {width} fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"line {lineno}: bad date {row[0]!r}") from None
            precip = _parse_float(row[1], "precip_mm", lineno)
            claims = _parse_float(row[2], "claims", lineno)
            if precip < 0:
                raise DataError(f"line {lineno}: negative precipitation {precip}")
            if claims < 0:
                raise DataError(f"line {lineno}: negative claims {claims}")
            insured = None
            if has_insured:
                try:
                    insured = int(row[3])
                except ValueError:
                    raise DataError(f"line {lineno}: bad insured count {row[3]!r}") from None
                if insured <= 0:
                    raise DataError(f"line {lineno}: insured must be positive")
                claims = claims / insured
            if prev is not None and date <= prev:
                raise DataError(f"line {lineno}: date {date} not after {prev}")
            prev = date
            records.append(DailyRecord(date, precip, claims, insured))
    return records


def write_daily_csv(path, records):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DAILY_HEADER)
        for r in records:
            w.writerow([r.date.isoformat(), repr(float(r.precip_mm)), repr(float(r.claims))])


def aggregate_weekly(days: Sequence[DailyRecord], week_origin=None, mode="mean"):
    """Aggregate daily records into 7-day blocks anchored at ``week_origin``.

    Blocks not fully covered by the records (a partial trailing week, or a
    leading block when the origin precedes the first date) are dropped.
    ``mode`` selects the weekly claim statistic, ``"mean"`` or ``"sum"``.
    """
    if mode not in ("mean", "sum"):
        raise DataError(f"unknown aggregation mode {mode!r}")
    if len(days) < 7:
        raise DataError(f"need at least 7 daily records, got {len(days)}")
    first = days[0].date
    origin = first if week_origin is None else week_origin
    if origin > first:
        raise DataError(f"week origin {origin} is after first date {first}")
    for a, b in zip(days, days[1:]):
        if (b.date - a.date).days != 1:
            raise DataError(f"daily records not contiguous between {a.date} and {b.date}")

    precip = np.array([r.precip_mm for r in days])
    claims = np.array([r.claims for r in days])
    offset = (first - origin).days
    # skip days belonging to a block that started before the first record
    skip = (-offset) % 7
    n_weeks = (len(days) - skip) // 7
    if n_weeks == 0:
        raise DataError("no complete week in the daily records")
    p = precip[skip:skip + 7 * n_weeks].reshape(n_weeks, 7)
    c = claims[skip:skip + 7 * n_weeks].reshape(n_weeks, 7)
    starts = [days[skip + 7 * k].date for k in range(n_weeks)]
    n = c.mean(axis=1) if mode == "mean" else c.sum(axis=1)
    return WeeklySeries(starts, p.sum(axis=1), p.max(axis=1), n)


def write_weekly_csv(path, series):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WEEKLY_HEADER)
        for i in range(len(series)):
            w.writerow([series.week_start[i].isoformat(), repr(float(series.x[i])),
                        repr(float(series.d[i])), repr(float(series.n[i]))])


def read_weekly_csv(path):
    starts, x, d, n = [], [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != WEEKLY_HEADER:
            raise DataError(f"{path}: header {header} does not match {WEEKLY_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"line {lineno}: expected 4 fields")
            starts.append(dt.date.fromisoformat(row[0]))
            x.append(_parse_float(row[1], "x", lineno))
            d.append(_parse_float(row[2], "d", lineno))
            n.append(_parse_float(row[3], "n", lineno))
    return WeeklySeries(starts, x, d, n)


def write_scenario_csv(path, scenarios):
    """Write ``{scenario_id: WeeklySeries}`` in long format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SCENARIO_HEADER)
        for sid, series in scenarios.items():
            for i in range(len(series)):
                w.writerow([series.week_start[i].isoformat(), sid,
                            repr(float(series.x[i])), repr(float(series.d[i]))])


def read_scenario_csv(path, allowed_ids=None):
    """Read projection-period precipitation; returns ``{scenario_id: WeeklySeries}``
    in first-appearance order, with ``n`` set to NaN."""
    rows = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCENARIO_HEADER:
            raise DataError(f"{path}: header {header} does not match {SCENARIO_HEADER}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise DataError(f"line {lineno}: expected 4 fields")
            sid = row[1]
            if allowed_ids is not None and sid not in allowed_ids:
                raise DataError(f"line {lineno}: unknown scenario_id {sid!r}")
            x = _parse_float(row[2], "x", lineno)
            d = _parse_float(row[3], "d", lineno)
            if x < 0 or d < 0 or d > x:
                raise DataError(f"line {lineno}: need 0 <= d <= x, got x={x}, d={d}")
            rows.setdefault(sid, []).append((dt.date.fromisoformat(row[0]), x, d))
    out = {}
    for sid, items in rows.items():
        for (a, _, _), (b, _, _) in zip(items, items[1:]):
            if (b - a).days != 7:
                raise DataError(f"scenario {sid}: weeks {a} and {b} are not contiguous")
        out[sid] = WeeklySeries([r[0] for r in items], [r[1] for r in items],
                                [r[2] for r in items], [math.nan] * len(items))
    return out


def build_features(series: WeeklySeries, columns, train_fraction=0.8, scaler=None,
                   drop_leading=None):
    """Lagged feature matrix for ``columns`` with the target ``n``.

    The first ``max lag`` weeks are dropped (or ``drop_leading`` weeks, which
    must be at least the max lag; used to align candidates with different
    lags). The scaler is fitted on the first ``ceil(train_fraction * rows)``
    rows (all rows when ``train_fraction == 1``) unless an existing
    ``(mean, sd)`` pair is passed in.
    """
    if not columns:
        raise DataError("no feature columns given")
    parsed = [parse_column(c) for c in columns]
    names = [column_name(v, k) for v, k in parsed]
    max_lag = max(k for _, k in parsed)
    lead = max_lag if drop_leading is None else int(drop_leading)
    if lead < max_lag:
        raise DataError(f"drop_leading={lead} is smaller than the maximum lag {max_lag}")
    total = len(series)
    if total <= lead:
        raise DataError(f"series of {total} weeks too short for lag {lead}")
    source = {"X": series.x, "D": series.d}
    rows = np.empty((total - lead, len(parsed)))
    for j, (var, lag) in enumerate(parsed):
        rows[:, j] = source[var][lead - lag: total - lag]
    target = series.n[lead:].copy()

    if scaler is None:
        if train_fraction == 1:
            n_train = rows.shape[0]
        else:
            n_train = split_point(rows.shape[0], train_fraction)
        fit = rows[:n_train]
        mean = fit.mean(axis=0)
        sd = fit.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
    else:
        mean, sd = (np.asarray(a, dtype=float) for a in scaler)
        if mean.shape != (len(names),) or sd.shape != (len(names),):
            raise DataError("scaler does not match the column list")
    return FeatureFrame(names, rows, target, mean, sd, list(series.week_start[lead:]))


def split_point(n_rows, fraction):
    if not 0 < fraction < 1:
        raise DataError(f"split fraction must be in (0, 1), got {fraction}")
    return min(n_rows, math.ceil(fraction * n_rows - 1e-9))


def split_train_test(frame: FeatureFrame, fraction=0.8):
    """Chronological split; train gets the first ``ceil(fraction * rows)`` rows."""
    if len(frame) == 0:
        raise DataError("cannot split an empty frame")
    k = split_point(len(frame), fraction)
    return frame.take(slice(0, k)), frame.take(slice(k, None))
