"""Risk subgroups from predicted log cumulative hazards.

Subjects are clustered with a one-dimensional Gaussian mixture on
``log Λ(t*|x)``; each group's survival is summarised by the Turnbull NPMLE,
which for interval-censored data determines survival only up to a band.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .data import Dataset
from .model import as_model

LOG_FLOOR = -700.0


@dataclass(frozen=True)
class TurnbullFit:
    left: np.ndarray  # q_j, open
    right: np.ndarray  # p_j, closed (may be inf)
    masses: np.ndarray
    times: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    loglik: float
    iterations: int

    def band(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Survival bounds at ``t``: mass of intervals starting before t vs. ending by t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        started = (self.left[None, :] < t[:, None]) @ self.masses
        finished = (self.right[None, :] <= t[:, None]) @ self.masses
        return 1 - started, 1 - finished

    def write_csv(self, path, label=None) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lower", "upper"])
            for t, lo, up in zip(self.times, self.lower, self.upper):
                w.writerow([repr(float(t)), repr(float(lo)), repr(float(up))])


def turnbull_intervals(l: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Innermost intervals: a left endpoint immediately followed by a right endpoint.

    Right endpoints sort before left endpoints at equal values, since
    ``(., c]`` and ``(c, .]`` do not overlap.
    """
    pts = [(float(v), 0) for v in r] + [(float(v), 1) for v in l]
    pts.sort()
    q, p = [], []
    for (v0, k0), (v1, k1) in zip(pts, pts[1:]):
        if k0 == 1 and k1 == 0 and (not q or (q[-1], p[-1]) != (v0, v1)):
            q.append(v0)
            p.append(v1)
    return np.array(q), np.array(p)


def _polish(A: np.ndarray, m: np.ndarray, max_iter: int = 100) -> np.ndarray | None:
    """Newton refinement of an EM solution on its support.

    EM crawls when a mass tends to zero with a flat gradient; here the support
    is shrunk whenever a step would make a mass negative, and the result is
    kept only if it satisfies the NPMLE optimality conditions.
    """
    n = A.shape[0]
    m = m.copy()
    S = np.flatnonzero(m > 0)
    for _ in range(max_iter):
        prob = A[:, S] @ m[S]
        g = A[:, S].T @ (1 / prob)
        H = -(A[:, S] / prob[:, None] ** 2).T @ A[:, S]
        k = len(S)
        kkt = np.zeros((k + 1, k + 1))
        kkt[:k, :k] = H
        kkt[:k, k] = kkt[k, :k] = 1.0
        step = np.linalg.lstsq(kkt, np.concatenate([-g, [0.0]]), rcond=None)[0][:k]
        new = m[S] + step
        if np.any(new <= 0):
            # move to the boundary and drop the blocking mass
            neg = step < 0
            ratios = np.where(neg, -m[S] / np.where(neg, step, -1), np.inf)
            j = int(np.argmin(ratios))
            m[S] = np.maximum(m[S] + ratios[j] * step, 0.0)
            m[S[j]] = 0.0
            S = np.delete(S, j)
            m[S] /= m[S].sum()
            continue
        m[S] = new / new.sum()
        if np.max(np.abs(step)) < 1e-15:
            break
    grad = A.T @ (1 / (A @ m))
    if np.any(m < 0) or np.any(grad > n * (1 + 1e-9)):
        return None
    return m


def turnbull(d: Dataset, tol: float = 1e-8, max_iter: int = 10000) -> TurnbullFit:
    """Self-consistency EM for the interval-censored NPMLE, Newton-polished."""
    if d.has_truncation:
        raise ValueError("turnbull() does not handle left truncation")
    q, p = turnbull_intervals(d.l, d.r)
    A = ((d.l[:, None] <= q[None, :]) & (p[None, :] <= d.r[:, None])).astype(float)
    n = len(d)
    m = np.full(len(q), 1.0 / len(q))
    it = 0
    for it in range(1, max_iter + 1):
        prob = A @ m
        new = m * (A / prob[:, None]).sum(axis=0) / n
        done = np.max(np.abs(new - m)) < tol
        m = new
        if done:
            break
    m = m / m.sum()
    loglik = float(np.sum(np.log(A @ m)))
    with np.errstate(divide="ignore", invalid="ignore"):
        pol = _polish(A, m)
    if pol is not None:
        ll = float(np.sum(np.log(A @ pol)))
        if ll >= loglik - 1e-12:
            m, loglik = pol, ll
    ends = np.concatenate([[0.0], d.l, d.r])
    times = np.unique(ends[np.isfinite(ends)])
    fit = TurnbullFit(q, p, m, times, np.empty(0), np.empty(0), loglik, it)
    lower, upper = fit.band(times)
    return TurnbullFit(q, p, m, times, lower, upper, loglik, it)


@dataclass(frozen=True)
class GMMFit:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    resp: np.ndarray
    labels: np.ndarray
    loglik_trace: list
    var_floor: float = 1e-8

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]

    def bic(self, n: int | None = None) -> float:
        n = len(self.labels) if n is None else n
        return -2 * self.loglik + (3 * self.k - 1) * math.log(n)


def _log_dens(x, w, mu, var):
    return np.log(w)[None, :] - 0.5 * (np.log(2 * np.pi * var)[None, :] + (x[:, None] - mu[None, :]) ** 2 / var[None, :])


def gmm_fit(values, K: int, seed: int = 0, max_iter: int = 500, tol: float = 1e-9, var_floor: float = 1e-8) -> GMMFit:
    """EM for a 1-D Gaussian mixture; components are ordered by mean."""
    x = np.asarray(values, dtype=float).reshape(-1)
    if K < 1:
        raise ValueError("K must be >= 1")
    n_distinct = len(np.unique(x))
    if K > n_distinct:
        raise ValueError(f"K={K} exceeds the {n_distinct} distinct values")
    chunks = np.array_split(np.sort(x), K)
    mu = np.array([c.mean() for c in chunks])
    if len(np.unique(mu)) < K:
        # separate coincident starting means deterministically per seed
        rng = np.random.default_rng(seed)
        mu = mu + rng.standard_normal(K) * max(x.std(), 1.0) * 1e-6
    var = np.full(K, max(x.var(), var_floor))
    w = np.full(K, 1.0 / K)
    trace = []
    for _ in range(max_iter):
        ld = _log_dens(x, w, mu, var)
        norm = logsumexp(ld, axis=1)
        trace.append(float(norm.sum()))
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
        resp = np.exp(ld - norm[:, None])
        nk = resp.sum(axis=0)
        # an emptied component keeps its parameters
        nz = nk > 0
        w = nk / len(x)
        mu = np.where(nz, (resp * x[:, None]).sum(axis=0) / np.where(nz, nk, 1), mu)
        var = np.where(nz, (resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / np.where(nz, nk, 1), var)
        var = np.maximum(var, var_floor)
        w = np.maximum(w, 1e-300)
        w = w / w.sum()
    ld = _log_dens(x, w, mu, var)
    resp = np.exp(ld - logsumexp(ld, axis=1)[:, None])
    order = np.argsort(mu, kind="stable")
    resp = resp[:, order]
    return GMMFit(w[order], mu[order], var[order], resp, np.argmax(resp, axis=1), trace, var_floor)


@dataclass(frozen=True)
class SubgroupResult:
    labels: np.ndarray
    log_cumhaz: np.ndarray
    gmm: GMMFit
    bic: dict


def identify_subgroups(model, d: Dataset, t_star: float, K: int | str = "auto", seed: int = 0, max_k: int = 4) -> SubgroupResult:
    """Cluster subjects on ``log Λ(t_star | x)``; ``K="auto"`` picks K <= max_k by BIC."""
    if not t_star > 0:
        raise ValueError("t_star must be > 0")
    m = as_model(model)
    lam = m.cumhaz(d.X, np.full(len(d), float(t_star)))
    logc = np.where(lam < 1e-300, LOG_FLOOR, np.log(np.maximum(lam, 1e-300)))
    if K == "auto":
        cands = range(1, min(max_k, len(np.unique(logc))) + 1)
        fits = {k: gmm_fit(logc, k, seed) for k in cands}
        bic = {k: f.bic() for k, f in fits.items()}
        best = min(bic, key=lambda k: (bic[k], k))
        fit = fits[best]
    else:
        fit = gmm_fit(logc, int(K), seed)
        bic = {int(K): fit.bic()}
    return SubgroupResult(fit.labels, logc, fit, bic)


def write_labels(res: SubgroupResult, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_index", "label", "log_cumhaz"])
        for i, (lab, v) in enumerate(zip(res.labels, res.log_cumhaz)):
            w.writerow([i, int(lab), repr(float(v))])
