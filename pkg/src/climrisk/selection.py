"""Held-out RMSE comparison of the four candidate predictor sets."""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .errors import DataError
from .ingest import build_features, parse_column, split_train_test


@dataclass(frozen=True)
class CandidateSpec:
    model_id: int
    columns: tuple

    @property
    def max_lag(self):
        return max(parse_column(c)[1] for c in self.columns)


CANDIDATES = (
    CandidateSpec(1, ("X_t", "X_t-1", "X_t-2")),
    CandidateSpec(2, ("X_t", "X_t-1", "D_t")),
    CandidateSpec(3, ("X_t", "X_t-1", "X_t-2", "D_t")),
    CandidateSpec(4, ("X_t", "X_t-1", "X_t-2", "D_t", "D_t-1")),
)


def enumerate_candidates():
    return list(CANDIDATES)


def candidate(model_id):
    for spec in CANDIDATES:
        if spec.model_id == model_id:
            return spec
    raise DataError(f"no candidate model {model_id}; expected 1..4")


@dataclass
class SelectionReport:
    rmse: dict                      # model_id -> RMSE (median over seeds)
    winner: int
    seeds: list
    fraction: float
    per_seed: dict = field(default_factory=dict)   # model_id -> list of RMSEs

    def to_dict(self):
        return {
            "rmse": {str(k): v for k, v in self.rmse.items()},
            "winner": self.winner,
            "seeds": list(self.seeds),
            "fraction": self.fraction,
            "per_seed": {str(k): list(v) for k, v in self.per_seed.items()},
        }

    @classmethod
    def from_dict(cls, doc):
        return cls({int(k): float(v) for k, v in doc["rmse"].items()}, int(doc["winner"]),
                   list(doc["seeds"]), float(doc["fraction"]),
                   {int(k): list(v) for k, v in doc.get("per_seed", {}).items()})


def evaluate_candidate(series, spec: CandidateSpec, config: mlp.NetworkConfig, fraction=0.8,
                       align_lag=None):
    """Train on the first ``fraction`` of weeks, return RMSE on the rest.

    ``align_lag`` drops that many leading weeks regardless of the candidate's
    own lags, so candidates are scored on identical target weeks.
    """
    frame = build_features(series, list(spec.columns), train_fraction=fraction,
                           drop_leading=align_lag)
    train_frame, test_frame = split_train_test(frame, fraction)
    if len(test_frame) == 0:
        raise DataError("no held-out rows left after the split")
    net = mlp.train(train_frame, dataclasses.replace(config, input_dim=len(spec.columns)))
    return mlp.rmse(mlp.predict(net, test_frame), test_frame.target)


def select_best(rmses):
    """``{model_id: rmse}`` -> winning id; ties go to the smaller id."""
    if not rmses:
        raise DataError("no candidates evaluated")
    return min(sorted(rmses), key=lambda k: rmses[k])


def run_selection(series, config: mlp.NetworkConfig, fraction=0.8, seeds=(0,), candidates=None):
    """Evaluate every candidate under each seed and pick the lowest median RMSE.

    All candidates share the seed within a run and are aligned on the
    largest lag among them.
    """
    candidates = list(CANDIDATES if candidates is None else candidates)
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise DataError("need at least one seed")
    align = max(c.max_lag for c in candidates)
    per_seed = {c.model_id: [] for c in candidates}
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed)
        for spec in candidates:
            per_seed[spec.model_id].append(evaluate_candidate(series, spec, cfg, fraction, align))
    rmse = {k: float(np.median(v)) for k, v in per_seed.items()}
    if not all(np.isfinite(v) for v in rmse.values()):
        raise DataError("non-finite RMSE in selection report")
    return SelectionReport(rmse, select_best(rmse), seeds, fraction, per_seed)


def write_report(report: SelectionReport, csv_path, json_path):
    with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_id", "rmse", "winner"])
        for k in sorted(report.rmse):
            w.writerow([k, repr(report.rmse[k]), int(k == report.winner)])
    Path(json_path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_report_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ["model_id", "rmse", "winner"]:
            raise DataError(f"{path}: unexpected header")
        return {int(r[0]): (float(r[1]), r[2] == "1") for r in reader}
