"""Prediction accuracy metrics for interval-censored survival models.

* ``mse_survival``: mean over subjects of (1/T) ∫_0^T (S - Ŝ)² dt, needs truth
* ``ibs``: integrated Brier score against the surrogate status indicator
* ``p_out`` / ``d_out``: predicted median outside the interval, and its
  distance to the nearest finite interval boundary

All integrals use the composite trapezoid rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, SurvivalCurve
from .model import SurvivalModel, as_model
from .ode import ODEConfig

LN2 = math.log(2.0)


@dataclass(frozen=True)
class EvaluationConfig:
    grid_points: int = 200

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValueError("grid_points must be >= 2")


@dataclass(frozen=True)
class MedianPrediction:
    t_median: float


class Diagnostics:
    """Counts degenerate surrogate evaluations (flat predicted curves)."""

    degenerate_surrogate = 0


def predict_survival(model, x, times, cfg: ODEConfig | None = None) -> SurvivalCurve:
    m = as_model(model, cfg)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be increasing and start >= 0")
    if times[0] != 0:
        times = np.concatenate([[0.0], times])
    lam = m.cumhaz_grid(np.asarray(x, dtype=float).reshape(1, -1), times[None, :])[0]
    s = np.exp(-lam)
    s[0] = 1.0
    # guard against sub-ulp increases from the integrator
    return SurvivalCurve(times, np.minimum.accumulate(s))


def mse_survival(model, X, truth, cfg: EvaluationConfig = EvaluationConfig()) -> float:
    m = as_model(model)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = np.array([rec.t_true for rec in truth])
    if np.any(T <= 0):
        raise ValueError("true event times must be positive")
    grid = np.linspace(0.0, 1.0, cfg.grid_points)[None, :] * T[:, None]
    s_hat = np.exp(-m.cumhaz_grid(X, grid))
    s_true = np.vstack([rec.survival(grid[i]) for i, rec in enumerate(truth)])
    per = np.trapezoid((s_true - s_hat) ** 2, grid, axis=1) / T
    return float(np.mean(per))


def surrogate_matrix(t, l, r, s_t, s_l, s_r) -> np.ndarray:
    """Surrogate indicator Î(T > t) on a grid (rows: subjects).

    ``s_r`` must be 0 for right-censored subjects.  Flat curves
    (``s_l == s_r``) give 0.5 inside the interval.
    """
    t = np.asarray(t, dtype=float)
    l = np.asarray(l, dtype=float)[:, None]
    r = np.asarray(r, dtype=float)[:, None]
    s_l = np.asarray(s_l, dtype=float)[:, None]
    s_r = np.asarray(s_r, dtype=float)[:, None]
    denom = s_l - s_r
    flat = denom <= 0
    inside = (t > l) & (t <= r)
    Diagnostics.degenerate_surrogate += int((inside & flat).sum())
    mid = np.where(flat, 0.5, (s_t - s_r) / np.where(flat, 1.0, denom))
    return np.where(t <= l, 1.0, np.where(t > r, 0.0, mid))


def surrogate_indicator(t: float, l: float, r: float, model, x) -> float:
    m = as_model(model)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    s = lambda tt: float(np.exp(-m.cumhaz(x, np.array([tt]))[0])) if tt > 0 else 1.0
    s_r = 0.0 if math.isinf(r) else s(r)
    s_t = s(t) if l < t <= r else 0.0
    return float(surrogate_matrix(np.array([[t]]), [l], [r], [[s_t]], [s(l)], [s_r])[0, 0])


def ibs_horizon(d: Dataset) -> float:
    ends = np.concatenate([d.l, d.r])
    return float(np.max(ends[np.isfinite(ends)]))


def ibs(model, d: Dataset, cfg: EvaluationConfig = EvaluationConfig(), u: float | None = None) -> float:
    m = as_model(model)
    u = ibs_horizon(d) if u is None else u
    grid = np.linspace(0.0, u, cfg.grid_points)
    s_hat = np.exp(-m.cumhaz_grid(d.X, grid[None, :]))
    s_l = np.exp(-m.cumhaz(d.X, d.l))
    finite = np.isfinite(d.r)
    s_r = np.zeros(len(d))
    if finite.any():
        s_r[finite] = np.exp(-m.cumhaz(d.X[finite], d.r[finite]))
    ind = surrogate_matrix(grid[None, :], d.l, d.r, s_hat, s_l, s_r)
    per = np.trapezoid((ind - s_hat) ** 2, grid, axis=1) / u
    return float(np.mean(per))


def predict_medians(model, X, max_doublings: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Solve Λ(t) = ln 2 per row by bisection; +inf if Λ(2**max_doublings) < ln 2."""
    m = as_model(model)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    hi = np.ones(n)
    for _ in range(max_doublings):
        short = m.cumhaz(X, hi) < LN2
        if not short.any():
            break
        hi = np.where(short, 2 * hi, hi)
    reached = m.cumhaz(X, hi) >= LN2
    lo = np.zeros(n)
    for _ in range(200):
        if np.all(hi - lo <= tol * np.maximum(hi, 1.0)):
            break
        mid = (lo + hi) / 2
        up = m.cumhaz(X, mid) >= LN2
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    return np.where(reached, (lo + hi) / 2, np.inf)


def predict_median(model, x, cfg: ODEConfig | None = None) -> MedianPrediction:
    return MedianPrediction(float(predict_medians(as_model(model, cfg), np.asarray(x).reshape(1, -1))[0]))


def p_out(model, d: Dataset, medians: np.ndarray | None = None) -> float:
    t_hat = predict_medians(model, d.X) if medians is None else medians
    inside = (t_hat > d.l) & (t_hat <= d.r)
    return float(np.mean(~inside))


def d_out_terms(t_hat, l, r) -> np.ndarray:
    dl = np.abs(l - t_hat)
    with np.errstate(invalid="ignore"):
        dr = np.where(np.isinf(r), np.inf, np.abs(r - t_hat))
    return np.minimum(dl, dr)


def d_out(model, d: Dataset, medians: np.ndarray | None = None) -> float:
    t_hat = predict_medians(model, d.X) if medians is None else medians
    return float(np.mean(d_out_terms(t_hat, d.l, d.r)))


def evaluate(model, d: Dataset, truth=None, cfg: EvaluationConfig = EvaluationConfig()) -> dict:
    m = as_model(model)
    med = predict_medians(m, d.X)
    out = {
        "ibs": ibs(m, d, cfg),
        "p_out": p_out(m, d, med),
        "d_out": d_out(m, d, med),
        "n": len(d),
        "u": ibs_horizon(d),
    }
    if truth is not None:
        out = {"mse": mse_survival(m, d.X, truth, cfg), **out}
    return out
