"""Minibatch penalised-likelihood training and one-at-a-time tuning."""
from __future__ import annotations

import csv
import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import Dataset, split_dataset
from .errors import ConfigError, ICODENError, TrainingError
from .likelihood import dataset_loss_grad, negloglik
from .metrics import EvaluationConfig, ibs
from .model import ICODENModel
from .net import MLPParams, NetworkShape, init_params, l1_penalty
from .ode import ODEConfig

OPTIMIZERS = ("adam", "sgd")
OAT_ORDER = ("nodes", "learning_rate", "alpha", "batch_size", "epochs")


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (10, 10)
    alpha: float = 0.01
    batch_size: int = 100
    epochs: int = 50
    learning_rate: float = 0.1
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int | None = 10
    val_fraction: float = 0.2
    seed: int = 0
    ode: ODEConfig = field(default_factory=ODEConfig)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if isinstance(self.ode, Mapping):
            object.__setattr__(self, "ode", from_dict(ODEConfig, self.ode))
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        if self.learning_rate <= 0 or self.alpha < 0:
            raise ConfigError("need learning_rate > 0 and alpha >= 0")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("patience must be >= 1 or null")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    def with_nodes(self, nodes: int) -> "TrainConfig":
        return dataclasses.replace(self, hidden=(int(nodes),) * max(len(self.hidden), 1))


def from_dict(cls, doc: Mapping, where: str = ""):
    """Build a config dataclass, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigError(f"unknown {where or cls.__name__} keys: {sorted(unknown)}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0
    early_stopped: bool = False
    wall_time: float = 0.0

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, (a, b) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                w.writerow([e, repr(float(a)), repr(float(b))])


class Adam:
    def __init__(self, n: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, n: int, lr: float, **_):
        self.lr = lr

    def step(self, theta, grad):
        return theta - self.lr * grad


def make_optimizer(cfg: TrainConfig, n: int):
    if cfg.optimizer == "adam":
        return Adam(n, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    return SGD(n, cfg.learning_rate)


def split_train_val(d: Dataset, cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    train, val = split_dataset(d, [1 - cfg.val_fraction, cfg.val_fraction], cfg.seed)
    return train, val


def mean_val_loss(params: MLPParams, val: Dataset, cfg: TrainConfig) -> float:
    return negloglik(params, val, cfg.ode) / len(val)


def train(
    d: Dataset,
    cfg: TrainConfig,
    val_metric: Callable[[MLPParams, Dataset], float] | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[MLPParams, TrainReport]:
    """Fit the hazard network; returns the best-validation parameters.

    Losses in the report are per-subject negative log-likelihoods without the
    L1 term.  ``val_metric`` replaces the validation loss used for early
    stopping and model selection.
    """
    t_start = time.perf_counter()
    train_d, val_d = split_train_val(d, cfg)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(seeds[1])
    params = init_params(NetworkShape(d.p, cfg.hidden), int(seeds[0].generate_state(1)[0]))
    opt = make_optimizer(cfg, len(params))
    batch_size = min(cfg.batch_size, len(train_d))
    metric = val_metric or (lambda prm, val: mean_val_loss(prm, val, cfg))

    report = TrainReport()
    best, best_loss, since_best = params, np.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_d))
        total = 0.0
        for b, start in enumerate(range(0, len(order), batch_size)):
            batch = train_d.take(order[start : start + batch_size])
            try:
                loss, grad = dataset_loss_grad(params, batch, cfg.alpha, cfg.ode)
            except ICODENError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingError(f"epoch {epoch}, batch {b}: non-finite loss or gradient ({loss})")
            total += loss - cfg.alpha * l1_penalty(params)
            params = params.with_flat(opt.step(params.flat, grad))
        try:
            val_loss = float(metric(params, val_d))
        except ICODENError as exc:
            raise TrainingError(f"epoch {epoch}, validation: {exc}") from exc
        if not np.isfinite(val_loss):
            raise TrainingError(f"epoch {epoch}: non-finite validation loss")
        report.train_loss.append(total / len(train_d))
        report.val_loss.append(val_loss)
        report.stopped_epoch = epoch
        if log:
            log(f"epoch {epoch:3d}  train {report.train_loss[-1]:.5f}  val {val_loss:.5f}")
        if val_loss < best_loss:
            best, best_loss, since_best = params, val_loss, 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if cfg.patience is not None and since_best >= cfg.patience:
                report.early_stopped = True
                break
    report.wall_time = time.perf_counter() - t_start
    return best, report


def _apply(cfg: TrainConfig, name: str, value) -> TrainConfig:
    if name == "nodes":
        return cfg.with_nodes(value)
    if name not in {f.name for f in dataclasses.fields(TrainConfig)}:
        raise ConfigError(f"unknown hyperparameter {name!r}")
    cast = {"batch_size": int, "epochs": int}.get(name, float)
    return dataclasses.replace(cfg, **{name: cast(value)})


def tune_oat(
    d: Dataset,
    base: TrainConfig,
    grids: Mapping[str, Sequence],
    metric: str | Callable[[MLPParams, TrainConfig, Dataset], float] = "validation-loss",
    eval_cfg: EvaluationConfig = EvaluationConfig(),
    log: Callable[[str], None] | None = None,
) -> tuple[TrainConfig, list[dict]]:
    """One-at-a-time search: tune each hyperparameter in turn, others held fixed.

    Hyperparameters run in ``OAT_ORDER`` first, then any others in the order
    given.  Smaller metric values are better.
    """
    names = [k for k in OAT_ORDER if k in grids] + [k for k in grids if k not in OAT_ORDER]
    for k in names:
        if len(grids[k]) == 0:
            raise ConfigError(f"empty grid for {k!r}")

    if callable(metric):
        score = metric
    elif metric == "validation-loss":
        score = lambda prm, cfg, val: mean_val_loss(prm, val, cfg)
    elif metric == "ibs":
        score = lambda prm, cfg, val: ibs(ICODENModel(prm, cfg.ode), val, eval_cfg)
    else:
        raise ConfigError(f"unknown tuning metric {metric!r}")

    current, table = base, []
    for name in names:
        best_value, best_score = None, np.inf
        for value in grids[name]:
            cfg = _apply(current, name, value)
            params, _ = train(d, cfg)
            _, val = split_train_val(d, cfg)
            s = float(score(params, cfg, val))
            table.append({"hyperparameter": name, "value": value, "metric": s})
            if log:
                log(f"{name}={value}: {s:.6g}")
            if s < best_score:
                best_value, best_score = value, s
        current = _apply(current, name, best_value)
    return current, table
