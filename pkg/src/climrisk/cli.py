"""Command-line driver: one subcommand per pipeline stage.

Every stage writes into ``<out>/<config digest[:12]>/`` together with a
``manifest-<stage>.json`` recording input/output digests, the seed and
library versions. Exit codes: 0 success, 1 usage/config error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import platform
import shutil
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, config as config_mod, copula, marginals, mlp, scenarios, selection, tailrisk
from .errors import ClimRiskError, ConfigError, DataError, NumericalError
from .ingest import (
    aggregate_weekly,
    build_features,
    canonical_columns,
    parse_daily_csv,
    read_scenario_csv,
    read_weekly_csv,
    write_daily_csv,
    write_scenario_csv,
    write_weekly_csv,
)

log = logging.getLogger("climrisk")

PREDICTIONS_HEADER = ["week_start", "scenario_id", "prediction"]
DENSITY_HEADER = ["z", "scenario_id", "density"]
STAGES = {}


def stage(name):
    def register(fn):
        STAGES[name] = fn
        return fn
    return register


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def _load_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def need(run_dir, filename, command):
    path = Path(run_dir) / filename
    if not path.exists():
        raise DataError(f"missing {filename} in {run_dir}; run `{command}` first")
    return path


def write_predictions(path, weeks, ids, matrix):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTIONS_HEADER)
        for j, sid in enumerate(ids):
            for i, week in enumerate(weeks):
                w.writerow([week.isoformat(), sid, repr(float(matrix[i, j]))])


def read_predictions(path):
    """Return ``(week_starts, scenario_ids, n x d matrix)``."""
    cols = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != PREDICTIONS_HEADER:
            raise DataError(f"{path}: header does not match {PREDICTIONS_HEADER}")
        for row in reader:
            cols.setdefault(row[1], []).append((dt.date.fromisoformat(row[0]), float(row[2])))
    ids = list(cols)
    weeks = [w for w, _ in cols[ids[0]]]
    for sid in ids:
        if [w for w, _ in cols[sid]] != weeks:
            raise DataError(f"{path}: scenario {sid} is not aligned with {ids[0]}")
    return weeks, ids, np.column_stack([[v for _, v in cols[sid]] for sid in ids])


def network_config(cfg, input_dim=None, epochs=None):
    net = cfg["network"]
    return mlp.NetworkConfig(
        input_dim=input_dim,
        hidden_layers=list(net["hidden_layers"]),
        dropout_rate=net["dropout_rate"],
        l2_lambda=net["l2_lambda"],
        seed=cfg["seed"],
        learning_rate=net["learning_rate"],
        epochs=net["epochs"] if epochs is None else epochs,
        batch_size=net["batch_size"],
        optimizer=net["optimizer"],
    )


def world_config(cfg):
    return scenarios.WorldConfig(seed=cfg["seed"], **cfg["simulate"])


def _weekly(run_dir):
    return read_weekly_csv(need(run_dir, "weekly.csv", "ingest"))


@stage("simulate")
def cmd_simulate(cfg, run_dir, out):
    world = world_config(cfg)
    write_daily_csv(out / "daily_control.csv", scenarios.control_daily(world))
    write_scenario_csv(out / "scenarios_weekly.csv", scenarios.scenario_weekly(world))
    _dump_json(out / "world.json", dataclasses.asdict(world))
    return []


@stage("ingest")
def cmd_ingest(cfg, run_dir, out):
    ing = cfg["ingest"]
    daily = Path(ing["daily_path"]) if ing["daily_path"] else need(run_dir, "daily_control.csv", "simulate")
    if not daily.exists():
        raise DataError(f"daily file {daily} not found")
    origin = dt.date.fromisoformat(ing["week_origin"]) if ing["week_origin"] else None
    series = aggregate_weekly(parse_daily_csv(daily), origin, ing["aggregation"])
    write_weekly_csv(out / "weekly.csv", series)
    return [daily]


@stage("select")
def cmd_select(cfg, run_dir, out):
    sel = cfg["selection"]
    series = _weekly(run_dir)
    seeds = [cfg["seed"] + k for k in range(sel["n_seeds"])]
    report = selection.run_selection(series, network_config(cfg, epochs=sel["epochs"]),
                                     sel["fraction"], seeds)
    selection.write_report(report, out / "selection.csv", out / "selection.json")
    return [run_dir / "weekly.csv"]


def _model_columns(cfg, run_dir):
    net = cfg["network"]
    if net["columns"]:
        return canonical_columns(net["columns"]), []
    if net["model_id"] == "auto":
        path = need(run_dir, "selection.json", "select")
        winner = selection.SelectionReport.from_dict(_load_json(path)).winner
        return list(selection.candidate(winner).columns), [path]
    return list(selection.candidate(net["model_id"]).columns), []


@stage("train")
def cmd_train(cfg, run_dir, out):
    series = _weekly(run_dir)
    columns, extra = _model_columns(cfg, run_dir)
    frame = build_features(series, columns, train_fraction=1.0)
    net = mlp.train(frame, network_config(cfg, input_dim=len(columns)))
    mlp.save(net, out / "model.json")
    fitted = mlp.predict(net, frame)
    _dump_json(out / "train_metrics.json", {
        "columns": columns, "rows": len(frame), "final_loss": net.final_loss,
        "in_sample_rmse": mlp.rmse(fitted, frame.target),
    })
    return [run_dir / "weekly.csv"] + extra


def _scenario_path(cfg, run_dir):
    path = cfg["ingest"]["scenarios_path"]
    if path:
        path = Path(path)
        if not path.exists():
            raise DataError(f"scenario file {path} not found")
        return path
    return need(run_dir, "scenarios_weekly.csv", "simulate")


@stage("predict")
def cmd_predict(cfg, run_dir, out):
    model_path = need(run_dir, "model.json", "train")
    net = mlp.load(model_path)
    scen_path = _scenario_path(cfg, run_dir)
    allowed = cfg["ingest"]["scenario_ids"]
    series_by_id = read_scenario_csv(scen_path, allowed_ids=set(allowed) if allowed else None)
    ids = list(series_by_id)
    preds, weeks = [], None
    for sid in ids:
        frame = build_features(series_by_id[sid], net.columns, scaler=(net.scaler_mean, net.scaler_sd))
        if weeks is None:
            weeks = frame.week_start
        elif frame.week_start != weeks:
            raise DataError(f"scenario {sid} covers different weeks than {ids[0]}")
        preds.append(mlp.predict(net, frame))
    write_predictions(out / "predictions.csv", weeks, ids, np.column_stack(preds))
    return [model_path, scen_path]


def _fit_sample(values, families, exposure):
    values = np.asarray(values, dtype=float)
    if "lognormal" in families:
        if np.any(values <= 0):
            raise DataError(f"{int(np.sum(values <= 0))} values are <= 0 (predictions are clamped at 0); "
                            "lognormal needs positive values, use count families with an exposure factor")
        sample, exposure = values, 1.0
    else:
        sample = marginals.discretize(values, exposure)
    fits = marginals.fit_families(sample, families, exposure)
    return marginals.best_by_aic(fits), fits


@stage("fit-marginals")
def cmd_fit_marginals(cfg, run_dir, out):
    pred_path = need(run_dir, "predictions.csv", "predict")
    _, ids, Y = read_predictions(pred_path)
    fams = list(cfg["marginals"]["families"])
    exposure = cfg["marginals"]["exposure"]
    doc = {"families": fams, "exposure": exposure, "scenarios": {}, "candidates": {}}
    for j, sid in enumerate(ids):
        best, fits = _fit_sample(Y[:, j], fams, exposure)
        doc["scenarios"][sid] = best.to_dict()
        doc["candidates"][sid] = [f.to_dict() for f in fits]
    series = _weekly(run_dir)
    best, fits = _fit_sample(series.n, fams, exposure)
    doc["control"] = best.to_dict()
    doc["candidates"]["control"] = [f.to_dict() for f in fits]
    _dump_json(out / "marginals.json", doc)
    return [pred_path, run_dir / "weekly.csv"]


@stage("fit-copula")
def cmd_fit_copula(cfg, run_dir, out):
    pred_path = need(run_dir, "predictions.csv", "predict")
    _, ids, Y = read_predictions(pred_path)
    cop = cfg["copula"]
    P = copula.pseudo_observations(Y)
    fit = copula.ESTIMATORS[cop["estimator"]](P, bootstrap_reps=cop["bootstrap_reps"], seed=cfg["seed"])
    doc = fit.to_dict()
    doc["scenario_ids"] = ids
    _dump_json(out / "copula.json", doc)
    return [pred_path]


def _z_grid(cfg, Y):
    risk = cfg["risk"]
    if risk["z_grid"]:
        z = np.asarray(risk["z_grid"], dtype=float)
        if np.any(np.diff(z) <= 0):
            raise ConfigError("config error at /risk/z_grid: must be strictly increasing")
        return z
    return tailrisk.default_z_grid(Y, risk["z_points"], risk["z_lo_pct"], risk["z_hi_pct"])


@stage("risk")
def cmd_risk(cfg, run_dir, out):
    marg_path = need(run_dir, "marginals.json", "fit-marginals")
    cop_path = need(run_dir, "copula.json", "fit-copula")
    pred_path = need(run_dir, "predictions.csv", "predict")
    mdoc = _load_json(marg_path)
    cdoc = _load_json(cop_path)
    _, ids, Y = read_predictions(pred_path)
    fits = [marginals.MarginalFit.from_dict(mdoc["scenarios"][sid]) for sid in cdoc["scenario_ids"]]
    cop = copula.CopulaFit.from_dict(cdoc)
    z = _z_grid(cfg, Y)
    city = cfg["city"]
    curve = tailrisk.risk_curve(tailrisk.RiskQuery(z, fits, cop), cfg["risk"]["mc_draws"],
                                seed=cfg["seed"], city=city, period="scenario")
    control = tailrisk.control_curve(marginals.MarginalFit.from_dict(mdoc["control"]), z, city=city)
    tailrisk.write_risk_csv(out / "risk_curve.csv", [curve, control])
    inputs = [marg_path, cop_path, pred_path]
    other = cfg["risk"]["compare_with"]
    if other:
        other = Path(other)
        if not other.exists():
            raise DataError(f"comparison curve {other} not found")
        base = [c for c in tailrisk.read_risk_csv(other) if c.period == "scenario"]
        if len(base) != 1:
            raise DataError(f"{other}: expected exactly one scenario-period curve")
        tailrisk.write_compare_csv(out / "comparison.csv", tailrisk.compare_risk(base[0], curve))
        inputs.append(other)
    return inputs


@stage("report")
def cmd_report(cfg, run_dir, out):
    marg_path = need(run_dir, "marginals.json", "fit-marginals")
    risk_path = need(run_dir, "risk_curve.csv", "risk")
    pred_path = need(run_dir, "predictions.csv", "predict")
    rep = out / "report"
    rep.mkdir()
    mdoc = _load_json(marg_path)
    _, ids, Y = read_predictions(pred_path)
    top = float(np.percentile(Y, 99.9))
    grid = np.linspace(top / 200, top, 200)
    with (rep / "density.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_HEADER)
        for sid in ids:
            dens = marginals.MarginalFit.from_dict(mdoc["scenarios"][sid]).density(grid)
            for zv, dv in zip(grid, dens):
                w.writerow([repr(float(zv)), sid, repr(float(dv))])
    shutil.copyfile(risk_path, rep / "risk_curve.csv")
    inputs = [marg_path, risk_path, pred_path]
    for name, target in (("selection.csv", "table_models.csv"), ("comparison.csv", "comparison.csv")):
        src = run_dir / name
        if src.exists():
            shutil.copyfile(src, rep / target)
            inputs.append(src)
    cop_path = run_dir / "copula.json"
    if cop_path.exists():
        cdoc = _load_json(cop_path)
        with (rep / "table_copula.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["city", "theta", "se", "estimator"])
            se = "" if cdoc["se"] is None else repr(cdoc["se"])
            w.writerow([cfg["city"], repr(cdoc["theta"]), se, cdoc["estimator"]])
        inputs.append(cop_path)
    return inputs


def _label(path, run_dir):
    path = Path(path).resolve()
    try:
        return str(path.relative_to(run_dir.resolve()))
    except ValueError:
        return str(path)


def _versions():
    return {"climrisk": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_stage(name, cfg, out_root):
    """Run one stage; returns the run directory."""
    digest = config_mod.digest(cfg)
    run_dir = Path(out_root) / digest[:12]
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        _dump_json(cfg_path, cfg)
    tmp = run_dir / f".tmp-{name}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir()
    try:
        inputs = STAGES[name](cfg, run_dir, tmp)
        produced = sorted(p for p in tmp.rglob("*") if p.is_file())
        manifest = {
            "command": name,
            "config_digest": digest,
            "seed": cfg["seed"],
            "inputs": {_label(p, run_dir): _sha256(p) for p in inputs},
            "outputs": {str(p.relative_to(tmp)): _sha256(p) for p in produced},
            "versions": _versions(),
        }
        text = json.dumps(manifest, indent=1) + "\n"
        mpath = run_dir / f"manifest-{name}.json"
        if mpath.exists() and mpath.read_text(encoding="utf-8") != text:
            raise DataError(f"{mpath} exists with different content; inputs changed since the "
                            "previous run, use a fresh output directory")
        for p in produced:
            dest = run_dir / p.relative_to(tmp)
            dest.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(p, dest)
        if not mpath.exists():
            mpath.write_text(text, encoding="utf-8")
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return run_dir


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="climrisk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in STAGES:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", help="output root (overrides output.dir)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--scenarios", help="projection-period scenario CSV")
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = config_mod.load(args.config, seed=args.seed, scenarios=args.scenarios)
        out_root = Path(args.out) if args.out else Path(args.config).resolve().parent / cfg["output"]["dir"]
        run_dir = run_stage(args.command, cfg, out_root)
    except ConfigError as exc:
        log.error("%s", exc)
        return 1
    except NumericalError as exc:
        log.error("%s", exc)
        return 3
    except (DataError, ClimRiskError) as exc:
        log.error("%s", exc)
        return 2
    if not args.quiet:
        print(run_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
