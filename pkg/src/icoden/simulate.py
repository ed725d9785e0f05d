"""Interval-censored data with known ground truth.

Every generating law has cumulative hazard ``c * t**k * exp(eta)``:

* ``simple``:   c = 2, k = 1 (X = 0) or k = 2 (X = 1), eta = 0
* ``scenario``: c = 0.01, k = 10 (or 5 for the non-PH arm), eta = linear predictor

Each subject draws from its own Philox substream keyed by ``(seed, index)``,
so a subject's data do not depend on how many others are generated.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import CovariateSchema, Dataset

LAW_SCALE = {"simple": 2.0, "scenario": 0.01}


@dataclass(frozen=True)
class VisitConfig:
    """Visit schedule: gaps ~ Exp(rate), count fixed or Poisson(mean)."""

    rate: float = 10.0
    n_visits: int | None = 20
    mean_visits: float | None = None

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("visit rate must be positive")
        if (self.n_visits is None) == (self.mean_visits is None):
            raise ValueError("give exactly one of n_visits or mean_visits")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: int
    n: int
    p: int = 20
    seed: int = 0
    beta_seed: int = 0
    visit_rate: float = 10.0
    mean_visits: float = 12.0

    def __post_init__(self):
        if self.scenario not in (1, 2, 3, 4):
            raise ValueError(f"scenario must be 1-4, got {self.scenario}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.scenario in (2, 3, 4) and self.p < 5:
            raise ValueError(f"scenario {self.scenario} needs p >= 5")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def visits(self) -> VisitConfig:
        return VisitConfig(rate=self.visit_rate, n_visits=None, mean_visits=self.mean_visits)


@dataclass(frozen=True)
class TruthRecord:
    t_true: float
    law: str
    k: float
    eta: float

    def cumhaz(self, t):
        return LAW_SCALE[self.law] * np.power(np.asarray(t, dtype=float), self.k) * math.exp(self.eta)

    def survival(self, t):
        return np.exp(-self.cumhaz(t))

    def inverse(self, u: float) -> float:
        """Event time solving S(t) = u."""
        return (-math.log(u) / (LAW_SCALE[self.law] * math.exp(self.eta))) ** (1.0 / self.k)


def subject_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def observe_interval(t: float, visits: np.ndarray) -> tuple[float, float]:
    """The visit gap ``(L, R]`` containing ``t``; ``(last visit, inf)`` past the end."""
    j = int(np.searchsorted(visits, t, side="left"))
    if j == len(visits):
        return float(visits[-1]), math.inf
    return (0.0 if j == 0 else float(visits[j - 1])), float(visits[j])


def draw_visits(rng: np.random.Generator, cfg: VisitConfig) -> np.ndarray:
    if cfg.n_visits is not None:
        m = cfg.n_visits
    else:
        m = 0
        while m < 1:  # redraw empty schedules
            m = int(rng.poisson(cfg.mean_visits))
    return np.cumsum(rng.exponential(1.0 / cfg.rate, size=m))


def gen_simple(n: int, seed: int, visits: VisitConfig = VisitConfig()) -> tuple[Dataset, list[TruthRecord]]:
    """One Bernoulli(0.5) covariate; S = exp(-2t) for X=0 and exp(-2t^2) for X=1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    l, r, X, truth = [], [], [], []
    for i in range(n):
        rng = subject_rng(seed, i)
        x = float(rng.random() < 0.5)
        rec = TruthRecord(0.0, "simple", 2.0 if x == 1 else 1.0, 0.0)
        t = rec.inverse(1.0 - rng.random())
        li, ri = observe_interval(t, draw_visits(rng, visits))
        l.append(li)
        r.append(ri)
        X.append([x])
        truth.append(TruthRecord(t, "simple", rec.k, 0.0))
    schema = CovariateSchema(("x1",), ("binary",))
    return Dataset(np.zeros(n), np.array(l), np.array(r), np.array(X), schema), truth


def kind_counts(p: int) -> tuple[int, int, int]:
    n_cont = int(math.floor(0.2 * p))
    n_bin = int(math.floor(0.2 * p))
    return n_cont, n_bin, p - n_cont - n_bin


def covariance(p: int) -> np.ndarray:
    j = np.arange(p)
    return np.exp(-np.abs(j[:, None] - j[None, :]))


def covariate_kinds(p: int) -> tuple[str, ...]:
    c, b, m = kind_counts(p)
    return ("continuous",) * c + ("binary",) * b + ("multinomial",) * m


def _discretize(z: np.ndarray, p: int) -> np.ndarray:
    c, b, _ = kind_counts(p)
    x = z.copy()
    x[..., c : c + b] = (z[..., c : c + b] > 0).astype(float)
    x[..., c + b :] = (z[..., c + b :] > -0.5).astype(float) + (z[..., c + b :] > 0.5)
    return x


def gen_covariates(n: int, p: int, seed: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """Rows from MVN(0, Σ), Σ_jk = exp(-|j-k|), then discretised per column kind."""
    if p < 1:
        raise ValueError("p must be >= 1")
    chol = np.linalg.cholesky(covariance(p))
    Z = np.vstack([chol @ subject_rng(seed, i).standard_normal(p) for i in range(n)])
    return _discretize(Z, p), covariate_kinds(p)


def scenario_beta(p: int, beta_seed: int) -> np.ndarray:
    c, b, m = kind_counts(p)
    beta = np.full(p, 0.2)
    if m:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(beta_seed)])))
        beta[c + b :] = rng.multivariate_normal(np.full(m, 0.2), 0.01 * covariance(m), method="cholesky")
    return beta


def scenario_law(scenario: int, x: np.ndarray, beta: np.ndarray) -> tuple[float, float]:
    """Weibull exponent and linear predictor for one covariate row."""
    eta = float(x @ beta)
    if scenario in (2, 4):
        eta += x[0] ** 2 + x[1] ** 2 + x[2] * x[3]
    k = 10.0
    if scenario in (3, 4):
        c, _, _ = kind_counts(len(x))
        if x[c] == 1:
            k = 5.0
    return k, eta


def gen_scenario(cfg: ScenarioConfig) -> tuple[Dataset, list[TruthRecord]]:
    p = cfg.p
    chol = np.linalg.cholesky(covariance(p))
    beta = scenario_beta(p, cfg.beta_seed)
    visits = cfg.visits
    l, r, X, truth = [], [], [], []
    for i in range(cfg.n):
        rng = subject_rng(cfg.seed, i)
        x = _discretize(chol @ rng.standard_normal(p), p)
        k, eta = scenario_law(cfg.scenario, x, beta)
        rec = TruthRecord(0.0, "scenario", k, eta)
        t = rec.inverse(1.0 - rng.random())
        li, ri = observe_interval(t, draw_visits(rng, visits))
        l.append(li)
        r.append(ri)
        X.append(x)
        truth.append(TruthRecord(t, "scenario", k, eta))
    schema = CovariateSchema(tuple(f"x{j + 1}" for j in range(p)), covariate_kinds(p))
    return Dataset(np.zeros(cfg.n), np.array(l), np.array(r), np.vstack(X), schema), truth


def write_truth(truth: list[TruthRecord], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_true", "law", "k", "eta"])
        for rec in truth:
            w.writerow([repr(float(rec.t_true)), rec.law, repr(float(rec.k)), repr(float(rec.eta))])


def read_truth(path) -> list[TruthRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [TruthRecord(float(r["t_true"]), r["law"], float(r["k"]), float(r["eta"])) for r in rows]
