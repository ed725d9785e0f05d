"""Cumulative hazard as the solution of ``dΛ/dt = f(Λ, t, x)``, ``Λ(0) = 0``.

Every query ``(x, t_eval)`` is mapped to rescaled time ``s = t / t_eval`` so
all queries share the interval ``[0, 1]`` and the fixed-step integrator
advances them in lockstep as one stacked system.

Gradients ``∂Λ(t_eval)/∂θ`` come from integrating the adjoint system
backwards from ``t_eval``.  With the default fixed-step RK4 the backward
sweep is the exact adjoint of the forward RK4 steps (it reuses the stored
stage states), so the result is the derivative of the discrete solution
itself.  With DOPRI5 the continuous augmented system
``[Λ, b, accumulator]' = [f, -b ∂f/∂Λ, -b ∂f/∂θ]`` is integrated backwards.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .errors import SolverError
from .net import GradAccumulator, HazardNet, MLPParams

METHODS = ("rk4", "dopri5")


@dataclass(frozen=True)
class ODEConfig:
    method: str = "rk4"
    n_steps: int = 32
    rtol: float = 1e-6
    atol: float = 1e-8
    max_steps: int = 10000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdjointState:
    """Augmented backward state ``[Λ, b, ∂Λ/∂θ accumulator]``."""

    lambda_cum: float
    b: float
    grad: np.ndarray

    @classmethod
    def start(cls, lambda_at_ti: float, n_params: int) -> "AdjointState":
        return cls(float(lambda_at_ti), 1.0, np.zeros(n_params))

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.lambda_cum, self.b], self.grad])

    @classmethod
    def unpack(cls, v: np.ndarray) -> "AdjointState":
        return cls(float(v[0]), float(v[1]), np.array(v[2:]))


# --------------------------------------------------------------------------
# generic integrators


def rk4(rhs: Callable, y0, t0: float, t1: float, n_steps: int):
    """Classical RK4 with ``n_steps`` equal steps; ``rhs(t, y)``."""
    y = np.asarray(y0, dtype=float)
    h = (t1 - t0) / n_steps
    for n in range(n_steps):
        t = t0 + n * h
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


_DP_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_DP_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def dopri5(rhs: Callable, y0, t0: float, t1: float, rtol=1e-6, atol=1e-8, max_steps=10000):
    """Adaptive Dormand-Prince 5(4); integrates backwards when ``t1 < t0``."""
    y = np.atleast_1d(np.asarray(y0, dtype=float)).copy()
    scalar = np.ndim(y0) == 0
    span = t1 - t0
    if span == 0:
        return y[0] if scalar else y
    direction = np.sign(span)
    t = t0
    f = np.atleast_1d(rhs(t, y[0] if scalar else y))
    h = direction * min(abs(span), 0.01 * abs(span) + 1e-3 * abs(span) / (1 + np.max(np.abs(f))))
    h = direction * max(abs(h), 1e-12 * abs(span))
    for _ in range(max_steps):
        if direction * (t + h - t1) > 0:
            h = t1 - t
        k = [f]
        for i in range(1, 7):
            yi = y + h * sum(a * kj for a, kj in zip(_DP_A[i], k))
            k.append(np.atleast_1d(rhs(t + _DP_C[i] * h, yi[0] if scalar else yi)))
        y_new = y + h * sum(b * kj for b, kj in zip(_DP_B5, k))
        err = h * sum((b5 - b4) * kj for b5, b4, kj in zip(_DP_B5, _DP_B4, k))
        if not np.all(np.isfinite(y_new)):
            raise SolverError(f"non-finite state at t={t + h:g}")
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
        if enorm <= 1.0:
            t = t + h
            y = y_new
            f = k[6]
            if direction * (t - t1) >= 0 or abs(t - t1) <= 1e-14 * max(1.0, abs(t1)):
                return y[0] if scalar else y
        factor = 10.0 if enorm == 0 else min(10.0, max(0.2, 0.9 * enorm ** -0.2))
        h = h * factor
    raise SolverError(f"dopri5 exceeded max_steps={max_steps} on [{t0:g}, {t1:g}]")


# --------------------------------------------------------------------------
# network-driven solves


def _raise_nonfinite(params: MLPParams, t_eval):
    raise SolverError(
        "non-finite cumulative hazard "
        f"(|theta|_2={np.linalg.norm(params.flat):.4g}, t_eval max={np.max(t_eval):.4g})"
    )


class LockstepRK4:
    """Fixed-step RK4 over rescaled time for a stack of queries.

    Stage states from the forward sweep are stored so :meth:`backward` can
    run the adjoint sweep on the same step grid.
    """

    def __init__(self, params: MLPParams, X: np.ndarray, T: np.ndarray, n_steps: int):
        self.params = params
        self.net = HazardNet(params)
        self.X = np.asarray(X, dtype=float)
        self.T = np.asarray(T, dtype=float).reshape(-1)
        if (self.T < 0).any() or not np.all(np.isfinite(self.T)):
            raise ValueError("t_eval must be finite and >= 0")
        self.n_steps = n_steps
        self.xproj = self.net.project(self.X)
        self._forward()

    def _forward(self):
        N, T, net, xp = self.n_steps, self.T, self.net, self.xproj
        h = 1.0 / N
        y = np.zeros(len(T))
        self.stages = np.empty((N, 4, len(T)))
        with np.errstate(over="ignore", invalid="ignore"):
            for n in range(N):
                s = n * h
                self.stages[n, 0] = y
                k1 = T * net(s * T, y, xp)
                y2 = y + h / 2 * k1
                self.stages[n, 1] = y2
                k2 = T * net((s + h / 2) * T, y2, xp)
                y3 = y + h / 2 * k2
                self.stages[n, 2] = y3
                k3 = T * net((s + h / 2) * T, y3, xp)
                y4 = y + h * k3
                self.stages[n, 3] = y4
                k4 = T * net((s + h) * T, y4, xp)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            _raise_nonfinite(self.params, T)
        self.lam = y

    def backward(self, weights=None, acc: GradAccumulator | None = None) -> np.ndarray:
        """Return ``Σ_q weights[q] · ∂Λ_q/∂θ`` (weights default to 1)."""
        N, T, net, xp = self.n_steps, self.T, self.net, self.xproj
        h = 1.0 / N
        yb = np.ones(len(T)) if weights is None else np.array(weights, dtype=float)
        acc = acc or GradAccumulator(self.params, len(T))
        for n in range(N - 1, -1, -1):
            s = n * h
            y1, y2, y3, y4 = self.stages[n]
            kb1 = h / 6 * yb
            kb2 = h / 3 * yb
            kb3 = h / 3 * yb
            kb4 = h / 6 * yb
            yb = yb.copy()
            dz = net.vjp((s + h) * T, y4, xp, T * kb4, acc)
            yb += dz
            kb3 = kb3 + h * dz
            dz = net.vjp((s + h / 2) * T, y3, xp, T * kb3, acc)
            yb += dz
            kb2 = kb2 + h / 2 * dz
            dz = net.vjp((s + h / 2) * T, y2, xp, T * kb2, acc)
            yb += dz
            kb1 = kb1 + h / 2 * dz
            yb += net.vjp(s * T, y1, xp, T * kb1, acc)
        return acc.flat(self.X)


def solve_cumhaz(params: MLPParams, x, t_eval: float, cfg: ODEConfig = ODEConfig(), rhs: Callable | None = None) -> float:
    """Λ(t_eval | x).  ``rhs(lam, t)`` replaces the network when given."""
    t_eval = float(t_eval)
    if t_eval < 0:
        raise ValueError(f"t_eval must be >= 0, got {t_eval}")
    if t_eval == 0:
        return 0.0
    if rhs is None:
        net = HazardNet(params)
        xp = net.project(np.asarray(x, dtype=float).reshape(1, -1))

        def rhs(lam, t):
            return net(np.atleast_1d(t), np.atleast_1d(lam), xp)[0]

    def g(s, lam):
        return t_eval * rhs(lam, s * t_eval)

    with np.errstate(over="ignore", invalid="ignore"):
        if cfg.method == "rk4":
            lam = float(rk4(g, 0.0, 0.0, 1.0, cfg.n_steps))
        else:
            lam = float(dopri5(g, 0.0, 0.0, 1.0, cfg.rtol, cfg.atol, cfg.max_steps))
    if not np.isfinite(lam):
        _raise_nonfinite(params, t_eval)
    return lam


def batch_solve(params: MLPParams, X, T, cfg: ODEConfig = ODEConfig()) -> np.ndarray:
    """Λ for each query row ``(X[q], T[q])``; lockstep for RK4."""
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float).reshape(-1)
    if X.ndim == 1:
        X = np.broadcast_to(X, (len(T), X.size))
    if len(T) == 0:
        return np.zeros(0)
    if cfg.method == "rk4":
        return LockstepRK4(params, X, T, cfg.n_steps).lam
    return np.array([solve_cumhaz(params, X[q], T[q], cfg) for q in range(len(T))])


def solve_adjoint(params: MLPParams, x, t_i: float, cfg: ODEConfig = ODEConfig()) -> tuple[float, np.ndarray]:
    """Return ``Λ(t_i)`` and ``∂Λ(t_i)/∂θ``."""
    t_i = float(t_i)
    if not t_i > 0:
        raise ValueError(f"t_i must be > 0, got {t_i}")
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if cfg.method == "rk4":
        sol = LockstepRK4(params, x, np.array([t_i]), cfg.n_steps)
        return float(sol.lam[0]), sol.backward()

    lam_ti = solve_cumhaz(params, x[0], t_i, cfg)
    net = HazardNet(params)
    xp = net.project(x)
    n = len(params)

    def aug(s, v):
        state = AdjointState.unpack(v)
        t = np.array([s * t_i])
        lam = np.array([state.lambda_cum])
        acc = GradAccumulator(params, 1)
        # cotangent 1 gives ∂f/∂Λ and ∂f/∂θ directly
        d_lam = net.vjp(t, lam, xp, np.ones(1), acc)
        f = net(t, lam, xp)[0]
        return t_i * np.concatenate([[f, -state.b * d_lam[0]], -state.b * acc.flat(x)])

    v0 = AdjointState.start(lam_ti, n).pack()
    with np.errstate(over="ignore", invalid="ignore"):
        v = dopri5(aug, v0, 1.0, 0.0, cfg.rtol, cfg.atol, cfg.max_steps)
    if not np.all(np.isfinite(v)):
        _raise_nonfinite(params, t_i)
    return lam_ti, AdjointState.unpack(v).grad


def integrate_grid(params: MLPParams, X, times, cfg: ODEConfig = ODEConfig()) -> np.ndarray:
    """Λ along per-row time grids ``times[i]`` (non-decreasing, ``>= 0``).

    Rows are advanced together in direct time; each gap between grid points
    gets ``max(1, ceil(n_steps / (m - 1)))`` RK4 substeps.
    """
    X = np.asarray(X, dtype=float)
    times = np.atleast_2d(np.asarray(times, dtype=float))
    if times.shape[0] == 1 and X.shape[0] > 1:
        times = np.broadcast_to(times, (X.shape[0], times.shape[1]))
    if (times < 0).any() or (np.diff(times, axis=1) < 0).any() or not np.all(np.isfinite(times)):
        raise ValueError("grid times must be finite, >= 0 and non-decreasing per row")
    B, m = times.shape
    grid = np.concatenate([np.zeros((B, 1)), times], axis=1)
    sub = max(1, -(-cfg.n_steps // max(m - 1, 1)))
    net = HazardNet(params)
    xp = net.project(X)
    out = np.empty((B, m))
    y = np.zeros(B)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(m):
            t0 = grid[:, j]
            h = (grid[:, j + 1] - t0) / sub
            for k in range(sub):
                t = t0 + k * h
                k1 = net(t, y, xp)
                k2 = net(t + h / 2, y + h / 2 * k1, xp)
                k3 = net(t + h / 2, y + h / 2 * k2, xp)
                k4 = net(t + h, y + h * k3, xp)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            out[:, j] = y
    if not np.all(np.isfinite(out)):
        _raise_nonfinite(params, times)
    return out
