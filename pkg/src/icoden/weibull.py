"""Weibull proportional-hazards baseline, ``Λ(t|x) = λ t^k exp(βᵀx)``.

Fitted by maximising the same interval-censored (and left-truncated)
likelihood as ICODEN, in the unconstrained parameters
``(log λ, log k, β)``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .data import Dataset, SurvivalCurve
from .errors import LikelihoodError
from .likelihood import _dloglik, loglik_terms


class BoundaryWarning(UserWarning):
    """The likelihood is maximised on the boundary of the parameter space."""


@dataclass(frozen=True)
class WeibullPHParams:
    log_scale: float
    log_shape: float
    beta: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))

    @property
    def scale(self) -> float:
        return math.exp(self.log_scale)

    @property
    def shape(self) -> float:
        return math.exp(self.log_shape)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([[self.log_scale, self.log_shape], self.beta])

    @classmethod
    def from_vector(cls, v, diagnostics=None) -> "WeibullPHParams":
        return cls(float(v[0]), float(v[1]), np.array(v[2:]), diagnostics or {})

    # SurvivalModel interface
    def cumhaz(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return weibull_cumhaz(self, X, np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],)))

    def cumhaz_grid(self, X, times):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        times = np.asarray(times, dtype=float)
        return weibull_cumhaz(self, X[:, None, :], times if times.ndim == 2 else times[None, :])

    def to_json(self) -> dict:
        return {
            "kind": "weibull_ph",
            "log_scale": self.log_scale,
            "log_shape": self.log_shape,
            "beta": [float(b) for b in self.beta],
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "WeibullPHParams":
        return cls(doc["log_scale"], doc["log_shape"], np.array(doc["beta"]), doc.get("diagnostics", {}))


def weibull_cumhaz(wp: WeibullPHParams, x, t):
    """λ t^k exp(βᵀx); zero at t = 0, +inf at t = inf."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    lin = np.asarray(x, dtype=float) @ wp.beta
    with np.errstate(divide="ignore", over="ignore"):
        return np.exp(wp.log_scale + lin) * np.power(t, wp.shape)


def weibull_predict_survival(wp: WeibullPHParams, x, times) -> SurvivalCurve:
    times = np.asarray(times, dtype=float)
    if times[0] != 0:
        times = np.concatenate([[0.0], times])
    lam = weibull_cumhaz(wp, np.asarray(x, dtype=float), times)
    return SurvivalCurve(times, np.exp(-lam))


def _lam_and_jac(v, X, t):
    """Λ at finite t > 0 and its gradient w.r.t. (log λ, log k, β); zeros elsewhere."""
    ok = (t > 0) & np.isfinite(t)
    ts = np.where(ok, t, 1.0)
    logt = np.log(ts)
    with np.errstate(over="ignore"):
        lam = np.where(ok, np.exp(v[0] + np.exp(v[1]) * logt + X @ v[2:]), 0.0)
    jac = np.column_stack([lam, lam * np.exp(v[1]) * logt, lam[:, None] * X])
    return np.where(np.isinf(t), np.inf, lam), jac


def negloglik_and_grad(v, d: Dataset) -> tuple[float, np.ndarray]:
    v = np.asarray(v, dtype=float)
    lv, jv = _lam_and_jac(v, d.X, d.v)
    ll, jl = _lam_and_jac(v, d.X, d.l)
    lr, jr = _lam_and_jac(v, d.X, d.r)
    terms = loglik_terms(lv, ll, lr)
    d_l, d_r = _dloglik(ll, lr)
    grad = jv.sum(axis=0) + d_l @ jl + d_r @ jr
    return -float(terms.sum()), -grad


def _start(d: Dataset) -> np.ndarray:
    spread = d.l + np.minimum(d.r, 3 * d.l)
    m = float(np.mean(spread))
    v = np.zeros(2 + d.p)
    v[0] = -math.log(m) if m > 0 else 0.0
    return v


def _newton_polish(fun, x, gtol: float, max_steps: int = 10) -> np.ndarray:
    """Newton steps on the gradient alone.

    Near the optimum of a large sample the objective changes by less than its
    rounding error, so line searches stall with the gradient just above
    ``gtol``; the gradient itself is still accurate and can be driven to zero.
    """
    f, g = fun(x)
    gnorm = float(np.max(np.abs(g)))
    for _ in range(max_steps):
        if gnorm < gtol or not math.isfinite(f):
            break
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        H = np.empty((len(x), len(x)))
        for j in range(len(x)):
            e = np.zeros_like(x)
            e[j] = h[j]
            H[:, j] = (fun(x + e)[1] - fun(x - e)[1]) / (2 * h[j])
        try:
            step = np.linalg.solve((H + H.T) / 2, -g)
        except np.linalg.LinAlgError:
            break
        f_new, g_new = fun(x + step)
        g_new_norm = float(np.max(np.abs(g_new)))
        if not (math.isfinite(f_new) and g_new_norm < gnorm):
            break
        x, f, g, gnorm = x + step, f_new, g_new, g_new_norm
    return x


def fit_weibull_ph(d: Dataset, max_iter: int = 2000, gtol: float = 1e-6) -> WeibullPHParams:
    """Maximum likelihood by BFGS on analytic gradients."""
    v0 = _start(d)

    def fun(v):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                f, g = negloglik_and_grad(v, d)
        except LikelihoodError:
            return math.inf, np.zeros_like(v)
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            return math.inf, np.zeros_like(v)
        return f, g

    f0, _ = fun(v0)
    if not math.isfinite(f0):
        raise LikelihoodError("non-finite likelihood at the starting point")
    res = minimize(fun, v0, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": max_iter})
    nit = int(res.nit)
    # BFGS can stop on line-search precision loss just above gtol; a fresh
    # start from the last iterate resets the Hessian approximation
    for _ in range(5):
        if res.success or nit >= max_iter:
            break
        res = minimize(fun, res.x, jac=True, method="BFGS", options={"gtol": gtol, "maxiter": max_iter - nit})
        nit += int(res.nit)
    x = _newton_polish(fun, res.x, gtol)
    f, g = fun(x)
    if not math.isfinite(f):
        raise LikelihoodError("non-finite likelihood at the fitted parameters")
    gnorm = float(np.max(np.abs(g)))
    # no events pushes λ to 0, only left-censoring pushes it to infinity
    degenerate = not np.isfinite(d.r).any() or bool(np.all(d.l == 0))
    boundary = bool(degenerate or x[0] < -30 or abs(x[1]) > 10)
    diagnostics = {
        "converged": gnorm < gtol,
        "grad_inf_norm": gnorm,
        "iterations": nit,
        "loglik": -f,
        "boundary": boundary,
    }
    if boundary:
        warnings.warn(
            f"Weibull-PH fit drifted to the parameter boundary (log_scale={x[0]:.3g}, "
            f"log_shape={x[1]:.3g}); the likelihood has no interior maximum",
            BoundaryWarning,
            stacklevel=2,
        )
    return WeibullPHParams.from_vector(x, diagnostics)


def save_weibull(path, wp: WeibullPHParams) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(wp.to_json(), indent=1) + "\n", encoding="utf-8")
