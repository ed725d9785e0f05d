"""Replicated simulation benchmark: ICODEN versus the Weibull-PH baseline.

Each replicate draws fresh training and test sets from one scenario (the
coefficients stay fixed through ``beta_seed``), fits every method on the
training set and scores survival MSE on the test set against the truth.
"""
from __future__ import annotations

import csv
import dataclasses
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .metrics import EvaluationConfig, mse_survival
from .model import ICODENModel
from .simulate import ScenarioConfig, gen_scenario
from .train import TrainConfig, from_dict, train
from .weibull import fit_weibull_ph

METHODS = ("icoden", "weibull_ph")

# desk-scale simulation settings; 100 nodes per layer keeps a replicate near one minute
DESK_TRAIN = TrainConfig(hidden=(100, 100), alpha=0.1, batch_size=400, epochs=100, learning_rate=0.001)


@dataclass(frozen=True)
class BenchmarkConfig:
    scenario: int = 4
    p: int = 20
    n_train: int = 1000
    n_test: int = 1000
    replicates: int = 10
    seed: int = 0
    beta_seed: int = 0
    visit_rate: float = 10.0
    mean_visits: float = 12.0
    methods: tuple[str, ...] = METHODS
    train: TrainConfig = field(default_factory=lambda: DESK_TRAIN)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if isinstance(self.train, Mapping):
            object.__setattr__(self, "train", from_dict(TrainConfig, self.train))
        if isinstance(self.evaluation, Mapping):
            object.__setattr__(self, "evaluation", from_dict(EvaluationConfig, self.evaluation))


def replicate_seeds(seed: int, r: int) -> tuple[int, int, int]:
    """(train-data seed, test-data seed, training seed) for replicate ``r``."""
    s = np.random.SeedSequence([int(seed), int(r)]).generate_state(3)
    return int(s[0]), int(s[1]), int(s[2])


def run_replicate(cfg: BenchmarkConfig, r: int) -> dict:
    s_train, s_test, s_fit = replicate_seeds(cfg.seed, r)
    common = dict(scenario=cfg.scenario, p=cfg.p, beta_seed=cfg.beta_seed,
                  visit_rate=cfg.visit_rate, mean_visits=cfg.mean_visits)
    train_d, _ = gen_scenario(ScenarioConfig(n=cfg.n_train, seed=s_train, **common))
    test_d, truth = gen_scenario(ScenarioConfig(n=cfg.n_test, seed=s_test, **common))
    row = {"replicate": r}
    if "icoden" in cfg.methods:
        params, report = train(train_d, dataclasses.replace(cfg.train, seed=s_fit))
        row["icoden"] = mse_survival(ICODENModel(params, cfg.train.ode), test_d.X, truth, cfg.evaluation)
        row["icoden_epochs"] = report.stopped_epoch
    if "weibull_ph" in cfg.methods:
        wp = fit_weibull_ph(train_d)
        row["weibull_ph"] = mse_survival(wp, test_d.X, truth, cfg.evaluation)
    return row


def _run(args):
    return run_replicate(*args)


def run_benchmark(cfg: BenchmarkConfig, workers: int = 1, log: Callable[[str], None] | None = None) -> list[dict]:
    jobs = [(cfg, r) for r in range(cfg.replicates)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_run(job))
            if log:
                log(", ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}" for k, v in rows[-1].items()))
    return rows


def summarize(cfg: BenchmarkConfig, rows: list[dict]) -> list[dict]:
    """Mean and sample SD (n-1 denominator) of test MSE per method."""
    out = []
    for m in cfg.methods:
        vals = [row[m] for row in rows]
        sd = statistics.stdev(vals) if len(vals) > 1 else float("nan")
        out.append({"scenario": f"scenario{cfg.scenario}", "predictors": f"p{cfg.p}",
                    "method": m, "mse_mean": statistics.fmean(vals), "mse_sd": sd})
    return out


def write_summary(summary: list[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "predictors", "method", "mse_mean", "mse_sd"])
        for s in summary:
            w.writerow([s["scenario"], s["predictors"], s["method"], f"{s['mse_mean']:.6g}", f"{s['mse_sd']:.6g}"])


def write_replicates(cfg: BenchmarkConfig, rows: list[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", *cfg.methods])
        for row in rows:
            w.writerow([row["replicate"], *(repr(float(row[m])) for m in cfg.methods)])
