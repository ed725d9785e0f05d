"""Shared generators and independent oracles for the test suite."""
from __future__ import annotations

import math

import mpmath
import numpy as np

from icoden.data import Dataset
from icoden.likelihood import QueryPlan, dataset_loss
from icoden.net import HazardNet, MLPParams, NetworkShape, init_params
from icoden.ode import LockstepRK4, ODEConfig


def random_params(p: int, hidden=(8, 8), seed: int = 0, bias_sd: float = 0.5, scale: float = 1.0) -> MLPParams:
    """Uniform-init weights plus random biases so pre-activations avoid exact zeros."""
    params = init_params(NetworkShape(p, tuple(hidden)), seed)
    rng = np.random.default_rng(seed + 10_000)
    layers = []
    for W, b in params.layers:
        layers.append((W * scale, rng.normal(0, bias_sd, size=b.shape)))
    flat = np.concatenate([np.concatenate([W.ravel(), b]) for W, b in layers])
    return params.with_flat(flat)


def random_dataset(n: int, p: int, seed: int, truncation: bool = True) -> Dataset:
    """Mixed left-, interval- and right-censored subjects with optional entry times."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    l = rng.uniform(0.2, 2.0, n)
    l[rng.random(n) < 0.2] = 0.0
    r = l + rng.uniform(0.1, 1.5, n)
    r[rng.random(n) < 0.25] = np.inf
    v = np.where(truncation & (rng.random(n) < 0.4), l * rng.uniform(0, 1, n), 0.0)
    return Dataset(v, l, r, X)


def min_preactivation(params: MLPParams, d: Dataset, cfg: ODEConfig = ODEConfig()) -> float:
    """Smallest |hidden pre-activation| over every network call of the RK4 forward pass."""
    plan = QueryPlan(d)
    X, T = d.X[plan.subject], plan.times
    sol = LockstepRK4(params, X, T, cfg.n_steps)
    net = HazardNet(params)
    xp = net.project(X)
    h = 1.0 / cfg.n_steps
    offsets = (0.0, 0.5, 0.5, 1.0)
    smallest = np.inf
    for n in range(cfg.n_steps):
        for k in range(4):
            t = (n * h + offsets[k] * h) * T
            _, zs = net.forward_cache(t, sol.stages[n, k], xp)
            for z in zs[:-1]:
                smallest = min(smallest, float(np.min(np.abs(z))))
    return smallest


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_loss_gradient(params: MLPParams, d: Dataset, alpha: float = 0.0, h: float = 1e-5) -> np.ndarray:
    return fd_gradient(lambda th: dataset_loss(params.with_flat(th), d, alpha), params.flat, h)


def rel_errors(g: np.ndarray, ref: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """Componentwise relative error on entries with magnitude above ``floor``."""
    big = (np.abs(g) > floor) | (np.abs(ref) > floor)
    return np.abs(g - ref)[big] / np.maximum(np.abs(g), np.abs(ref))[big]


def kaplan_meier(times: np.ndarray, events: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Product-limit estimate at ``at``; events precede censorings at tied times."""
    order = np.lexsort((1 - events, times))
    times, events = times[order], events[order]
    out = []
    for t0 in at:
        s = 1.0
        for u in np.unique(times[(events == 1) & (times <= t0)]):
            at_risk = np.sum(times >= u)
            deaths = np.sum((times == u) & (events == 1))
            s *= 1 - deaths / at_risk
        out.append(s)
    return np.array(out)


def naive_loglik(lv: float, ll: float, lr: float) -> float:
    if math.isinf(lr):
        return -ll + lv
    return math.log(math.exp(-ll) - math.exp(-lr)) + lv


def naive_loglik_exact(lv: float, ll: float, lr: float) -> float:
    """The naive formula in 50-digit arithmetic; float64 cancels ~eps/ΔΛ."""
    with mpmath.workdps(50):
        if math.isinf(lr):
            return float(-mpmath.mpf(ll) + lv)
        return float(mpmath.log(mpmath.exp(-mpmath.mpf(ll)) - mpmath.exp(-mpmath.mpf(lr))) + lv)


def random_turnbull_dataset(rng: np.random.Generator, max_n: int = 6, max_intervals: int = 4) -> Dataset:
    """Small integer-grid interval-censored sample with at most ``max_intervals`` Turnbull intervals."""
    from icoden.subgroup import turnbull_intervals

    while True:
        n = int(rng.integers(2, max_n + 1))
        l = rng.integers(0, 6, n).astype(float)
        r = l + rng.integers(1, 4, n)
        r[rng.random(n) < 0.2] = np.inf
        if 1 <= len(turnbull_intervals(l, r)[0]) <= max_intervals:
            return Dataset(np.zeros(n), l, r, np.zeros((n, 1)))


def turnbull_oracle(A: np.ndarray) -> tuple[np.ndarray, bool]:
    """Maximise Σ log(A m) over the simplex with a conic solver, then refine.

    The conic solution is only good to ~1e-6, so the masses on its support
    are re-solved from the stationarity conditions. Returns the masses and
    whether they are unique (support columns of A linearly independent).
    """
    import cvxpy as cp
    from scipy.optimize import root

    n, k = A.shape
    m = cp.Variable(k, nonneg=True)
    cp.Problem(cp.Maximize(cp.sum(cp.log(A @ m))), [cp.sum(m) == 1]).solve(solver=cp.CLARABEL)
    x = np.clip(np.asarray(m.value), 0.0, None)
    x /= x.sum()
    S = np.flatnonzero(x > 1e-5)
    AS = A[:, S]

    def stationarity(y):
        ms = np.append(y, 1 - y.sum())
        g = AS.T @ (1 / (AS @ ms))
        return g[:-1] - g[-1]

    if len(S) > 1:
        sol = root(stationarity, x[S][:-1], method="lm", options={"xtol": 1e-15, "ftol": 1e-15})
        ms = np.append(sol.x, 1 - sol.x.sum())
    else:
        ms = np.ones(1)
    out = np.zeros(k)
    out[S] = ms
    unique = np.linalg.matrix_rank(AS) == len(S)
    return out, bool(unique)


def turnbull_matrix(d: Dataset, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Incidence of Turnbull interval j inside observation interval i, built independently."""
    A = np.zeros((len(d), len(q)))
    for i in range(len(d)):
        for j in range(len(q)):
            A[i, j] = float(d.l[i] <= q[j] and p[j] <= d.r[i])
    return A
