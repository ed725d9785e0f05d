"""Uniform prediction interface shared by ICODEN and the Weibull-PH baseline.

A survival model exposes ``cumhaz(X, t)`` (one time per row) and
``cumhaz_grid(X, times)`` (a time grid per row).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .net import MLPParams
from .ode import ODEConfig, batch_solve, integrate_grid


class SurvivalModel(Protocol):
    def cumhaz(self, X: np.ndarray, t: np.ndarray) -> np.ndarray: ...

    def cumhaz_grid(self, X: np.ndarray, times: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ICODENModel:
    params: MLPParams
    ode: ODEConfig = field(default_factory=ODEConfig)

    def cumhaz(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (X.shape[0],))
        out = np.zeros(X.shape[0])
        pos = t > 0
        if pos.any():
            out[pos] = batch_solve(self.params, X[pos], t[pos], self.ode)
        return out

    def cumhaz_grid(self, X, times):
        return integrate_grid(self.params, np.atleast_2d(X), times, self.ode)


def as_model(obj, ode: ODEConfig | None = None) -> SurvivalModel:
    if isinstance(obj, MLPParams):
        return ICODENModel(obj, ode or ODEConfig())
    return obj
