"""Command-line interface: ``icoden <command> [--config FILE] [options]``.

Every command reads an optional JSON config, applies flag overrides, writes
its artifacts under ``--out-dir`` and prints a short JSON summary.  Failures
print ``{"error": ..., "message": ...}`` to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmark import BenchmarkConfig, run_benchmark, summarize, write_replicates, write_summary
from .data import Dataset, load_dataset, write_dataset
from .errors import ConfigError, DataError, ICODENError
from .metrics import EvaluationConfig, d_out_terms, evaluate, predict_medians
from .model import ICODENModel
from .net import load_model, save_model
from .ode import ODEConfig
from .simulate import ScenarioConfig, VisitConfig, gen_scenario, gen_simple, read_truth, write_truth
from .subgroup import identify_subgroups, turnbull, write_labels
from .train import TrainConfig, from_dict, train, tune_oat
from .weibull import WeibullPHParams, fit_weibull_ph, save_weibull

COMMANDS = ("simulate", "train", "predict", "evaluate", "tune", "subgroup", "benchmark")


@dataclass(frozen=True)
class SimulateConfig:
    dataset: str = "scenario"  # "simple" or "scenario"
    scenario: int = 4
    n: int = 1000
    p: int = 20
    seed: int = 0
    beta_seed: int = 0
    visit_rate: float = 10.0
    mean_visits: float = 12.0
    n_visits: int = 20  # simple example only


@dataclass(frozen=True)
class TrainRunConfig:
    data: str | None = None
    has_truncation: bool = False
    method: str = "icoden"  # or "weibull_ph"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if isinstance(self.train, dict):
            object.__setattr__(self, "train", from_dict(TrainConfig, self.train, "train"))
        if self.method not in ("icoden", "weibull_ph"):
            raise ConfigError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class PredictConfig:
    model: str | None = None
    data: str | None = None
    has_truncation: bool = False
    times: list | None = None
    t_max: float | None = None
    points: int = 50


@dataclass(frozen=True)
class EvaluateConfig:
    model: str | None = None
    data: str | None = None
    truth: str | None = None
    has_truncation: bool = False
    per_subject: bool = False
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        if isinstance(self.evaluation, dict):
            object.__setattr__(self, "evaluation", from_dict(EvaluationConfig, self.evaluation, "evaluation"))


@dataclass(frozen=True)
class TuneConfig:
    data: str | None = None
    has_truncation: bool = False
    base: TrainConfig = field(default_factory=TrainConfig)
    grids: dict = field(default_factory=dict)
    metric: str = "validation-loss"
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        if isinstance(self.base, dict):
            object.__setattr__(self, "base", from_dict(TrainConfig, self.base, "base"))
        if isinstance(self.evaluation, dict):
            object.__setattr__(self, "evaluation", from_dict(EvaluationConfig, self.evaluation, "evaluation"))


@dataclass(frozen=True)
class SubgroupConfig:
    model: str | None = None
    data: str | None = None
    has_truncation: bool = False
    t_star: float | None = None
    k: int | str = "auto"
    seed: int = 0


# ---------------------------------------------------------------- helpers


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _parse_value(s: str):
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def _apply_sets(doc: dict, sets: list[str]) -> dict:
    """``--set a.b=value`` overrides; values parse as JSON when they can."""
    doc = json.loads(json.dumps(doc))
    for item in sets or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        node = doc
        *path, last = key.split(".")
        for k in path:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {k} is not a section")
        node[last] = _parse_value(val)
    return doc


def _load_model(path):
    if path is None:
        raise ConfigError("a model file is required (--model)")
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    if doc.get("kind") == "weibull_ph":
        return WeibullPHParams.from_json(doc)
    params, doc = load_model(path)
    ode = from_dict(ODEConfig, doc["ode"]) if "ode" in doc else ODEConfig()
    return ICODENModel(params, ode)


def _load_data(path, has_truncation: bool) -> Dataset:
    if path is None:
        raise ConfigError("a dataset file is required (--data)")
    if not Path(path).exists():
        raise DataError(f"dataset file not found: {path}")
    return load_dataset(path, has_truncation=has_truncation)


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(x) -> str:
    return repr(float(x))


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_simulate(doc: dict, args) -> dict:
    cfg = from_dict(SimulateConfig, doc, "simulate")
    if cfg.dataset == "simple":
        d, truth = gen_simple(cfg.n, cfg.seed, VisitConfig(rate=cfg.visit_rate, n_visits=cfg.n_visits))
    elif cfg.dataset == "scenario":
        d, truth = gen_scenario(ScenarioConfig(cfg.scenario, cfg.n, cfg.p, cfg.seed, cfg.beta_seed,
                                               cfg.visit_rate, cfg.mean_visits))
    else:
        raise ConfigError(f"dataset must be 'simple' or 'scenario', got {cfg.dataset!r}")
    out = Path(args.out_dir)
    write_dataset(d, out / "data.csv")
    write_truth(truth, out / "truth.csv")
    return {"n": len(d), "p": d.p, **d.censoring_counts(), "data": str(out / "data.csv"),
            "truth": str(out / "truth.csv")}


def cmd_train(doc: dict, args) -> dict:
    cfg = from_dict(TrainRunConfig, doc, "train")
    d = _load_data(cfg.data, cfg.has_truncation)
    out = Path(args.out_dir)
    if cfg.method == "weibull_ph":
        wp = fit_weibull_ph(d)
        save_weibull(out / "model.json", wp)
        return {"method": "weibull_ph", "model": str(out / "model.json"), **wp.diagnostics}
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    params, report = train(d, cfg.train, log=log)
    save_model(out / "model.json", params, seed=cfg.train.seed, ode=cfg.train.ode.to_dict(),
               train=cfg.train.to_dict())
    report.write_csv(out / "report.csv")
    return {"method": "icoden", "model": str(out / "model.json"), "report": str(out / "report.csv"),
            "best_epoch": report.best_epoch, "stopped_epoch": report.stopped_epoch,
            "early_stopped": report.early_stopped}


def cmd_predict(doc: dict, args) -> dict:
    cfg = from_dict(PredictConfig, doc, "predict")
    model = _load_model(cfg.model)
    d = _load_data(cfg.data, cfg.has_truncation)
    if cfg.times is not None:
        times = np.asarray(cfg.times, dtype=float)
    else:
        finite = np.concatenate([d.l, d.r[np.isfinite(d.r)]])
        t_max = cfg.t_max if cfg.t_max is not None else float(finite.max())
        times = np.linspace(0.0, t_max, cfg.points)
    if times.ndim != 1 or len(times) == 0 or np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ConfigError("times must be a nonempty increasing list of values >= 0")
    surv = np.exp(-model.cumhaz_grid(d.X, times))
    path = Path(args.out_dir) / "curves.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_index", "t", "survival"])
        for i in range(len(d)):
            for t, s in zip(times, surv[i]):
                w.writerow([i, _fmt(t), _fmt(s)])
    return {"curves": str(path), "rows": int(surv.size)}


def cmd_evaluate(doc: dict, args) -> dict:
    cfg = from_dict(EvaluateConfig, doc, "evaluate")
    model = _load_model(cfg.model)
    d = _load_data(cfg.data, cfg.has_truncation)
    truth = None
    if cfg.truth is not None:
        truth = read_truth(cfg.truth)
        if len(truth) != len(d):
            raise DataError(f"truth has {len(truth)} rows, dataset has {len(d)}")
    metrics = evaluate(model, d, truth, cfg.evaluation)
    out = Path(args.out_dir)
    _dump_json(metrics, out / "metrics.json")
    if cfg.per_subject:
        med = predict_medians(model, d.X)
        dist = d_out_terms(med, d.l, d.r)
        with open(out / "per_subject.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_index", "t_median", "outside", "distance"])
            for i in range(len(d)):
                outside = int(not (d.l[i] < med[i] <= d.r[i]))
                w.writerow([i, _fmt(med[i]), outside, _fmt(dist[i])])
    return metrics


def cmd_tune(doc: dict, args) -> dict:
    cfg = from_dict(TuneConfig, doc, "tune")
    if not cfg.grids:
        raise ConfigError("tune needs a non-empty 'grids' section")
    d = _load_data(cfg.data, cfg.has_truncation)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    best, table = tune_oat(d, cfg.base, cfg.grids, cfg.metric, cfg.evaluation, log)
    out = Path(args.out_dir)
    _dump_json(best.to_dict(), out / "best_config.json")
    with open(out / "tune_table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hyperparameter", "value", "metric"])
        for row in table:
            w.writerow([row["hyperparameter"], row["value"], _fmt(row["metric"])])
    return {"best_config": str(out / "best_config.json"), "table": str(out / "tune_table.csv"),
            "evaluated": len(table)}


def cmd_subgroup(doc: dict, args) -> dict:
    cfg = from_dict(SubgroupConfig, doc, "subgroup")
    if cfg.t_star is None:
        raise ConfigError("subgroup needs t_star (--t-star)")
    k = cfg.k if cfg.k == "auto" else int(cfg.k)
    model = _load_model(cfg.model)
    d = _load_data(cfg.data, cfg.has_truncation)
    res = identify_subgroups(model, d, float(cfg.t_star), k, cfg.seed)
    out = Path(args.out_dir)
    write_labels(res, out / "labels.csv")
    sizes = []
    for g in range(res.gmm.k):
        idx = np.flatnonzero(res.labels == g)
        sizes.append(int(len(idx)))
        if len(idx):
            turnbull(d.take(idx)).write_csv(out / f"band_group{g}.csv")
    return {"k": res.gmm.k, "sizes": sizes, "means": [float(m) for m in res.gmm.means],
            "labels": str(out / "labels.csv")}


def cmd_benchmark(doc: dict, args) -> dict:
    cfg = from_dict(BenchmarkConfig, doc, "benchmark")
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    rows = run_benchmark(cfg, workers=args.workers, log=log)
    summary = summarize(cfg, rows)
    out = Path(args.out_dir)
    write_summary(summary, out / "benchmark_summary.csv")
    write_replicates(cfg, rows, out / "benchmark_replicates.csv")
    return {"summary": summary}


HANDLERS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "subgroup": cmd_subgroup,
    "benchmark": cmd_benchmark,
}

# flag name -> config key (top level unless dotted)
FILE_FLAGS = {
    "simulate": (),
    "train": ("data",),
    "predict": ("model", "data"),
    "evaluate": ("model", "data", "truth"),
    "tune": ("data",),
    "subgroup": ("model", "data"),
    "benchmark": (),
}
SEED_KEY = {"simulate": "seed", "train": "train.seed", "tune": "base.seed", "subgroup": "seed",
            "benchmark": "seed"}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="icoden", description="Neural-ODE hazard models for interval-censored data")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes")
        p.add_argument("--out-dir", default=".", help="directory for outputs")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. train.epochs=20")
        p.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")
        for flag in FILE_FLAGS[name]:
            p.add_argument(f"--{flag}")
        if name == "predict":
            p.add_argument("--times", help="comma-separated evaluation times")
        if name == "evaluate":
            p.add_argument("--per-subject", action="store_true")
        if name == "subgroup":
            p.add_argument("--t-star", type=float)
            p.add_argument("--k", help="number of groups or 'auto'")
        if name in ("train", "predict", "evaluate", "tune", "subgroup"):
            p.add_argument("--has-truncation", action="store_true", default=None)
    return ap


def _config_for(args) -> dict:
    doc = _read_config(args.config)
    sets = list(args.set)
    for flag in FILE_FLAGS[args.command]:
        if getattr(args, flag) is not None:
            sets.append(f"{flag}={json.dumps(getattr(args, flag))}")
    if args.seed is not None and args.command in SEED_KEY:
        sets.append(f"{SEED_KEY[args.command]}={args.seed}")
    if getattr(args, "has_truncation", None):
        sets.append("has_truncation=true")
    if getattr(args, "times", None):
        sets.append(f"times=[{args.times}]")
    if getattr(args, "per_subject", False):
        sets.append("per_subject=true")
    if getattr(args, "t_star", None) is not None:
        sets.append(f"t_star={args.t_star!r}")
    if getattr(args, "k", None) is not None:
        sets.append(f"k={json.dumps(args.k) if args.k == 'auto' else int(args.k)}")
    return _apply_sets(doc, sets)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        summary = HANDLERS[args.command](_config_for(args), args)
    except (ConfigError, DataError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 2
    except (ICODENError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 1
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
