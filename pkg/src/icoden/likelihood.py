"""Interval-censored (optionally left-truncated) log-likelihood and its gradient.

Per subject::

    log[exp(-Λ(L)) - exp(-Λ(R))] + Λ(V)

evaluated as ``-Λ(L) + log(-expm1(-(Λ(R) - Λ(L)))) + Λ(V)``; a right-censored
subject contributes ``-Λ(L) + Λ(V)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import LikelihoodError
from .net import MLPParams, l1_penalty, l1_subgradient
from .ode import LockstepRK4, ODEConfig, batch_solve, solve_adjoint

SMALL_GAP = 1e-12


@dataclass(frozen=True)
class SubjectLikTerms:
    lambda_v: float
    lambda_l: float
    lambda_r: float

    def __post_init__(self):
        if not 0 <= self.lambda_v <= self.lambda_l <= self.lambda_r:
            raise LikelihoodError(
                f"need 0 <= Λ(V) <= Λ(L) <= Λ(R), got {self.lambda_v}, {self.lambda_l}, {self.lambda_r}"
            )


def _log_one_minus_exp_neg(gap: np.ndarray) -> np.ndarray:
    """log(1 - exp(-gap)) for gap > 0, with a series branch for tiny gaps."""
    gap = np.asarray(gap, dtype=float)
    small = gap < SMALL_GAP
    safe = np.where(small, 1.0, gap)
    tiny = np.where(small, gap, 1e-13)
    return np.where(small, np.log(tiny) + np.log1p(-tiny / 2), np.log(-np.expm1(-safe)))


def loglik_terms(lam_v, lam_l, lam_r) -> np.ndarray:
    """Vectorised per-subject log-likelihood; ``lam_r`` may be +inf."""
    lam_v, lam_l, lam_r = (np.asarray(a, dtype=float) for a in (lam_v, lam_l, lam_r))
    right = np.isinf(lam_r)
    gap = np.where(right, 1.0, lam_r - lam_l)
    if np.any(gap < 0):
        i = int(np.argmax(gap < 0))
        raise LikelihoodError(f"subject {i}: Λ(R) < Λ(L) ({lam_r.flat[i]} < {lam_l.flat[i]})")
    if np.any(gap == 0):
        i = int(np.argmax(gap == 0))
        raise LikelihoodError(f"subject {i}: zero-probability interval (Λ(R) == Λ(L))")
    return -lam_l + np.where(right, 0.0, _log_one_minus_exp_neg(gap)) + lam_v


def subject_loglik(terms: SubjectLikTerms) -> float:
    return float(loglik_terms(terms.lambda_v, terms.lambda_l, terms.lambda_r))


def _dloglik(lam_l, lam_r):
    """Derivatives of the per-subject log-likelihood w.r.t. Λ(L) and Λ(R)."""
    right = np.isinf(lam_r)
    gap = np.where(right, 1.0, lam_r - lam_l)
    with np.errstate(over="ignore"):
        d_l = np.where(right, -1.0, 1.0 / np.expm1(-gap))
        d_r = np.where(right, 0.0, 1.0 / np.expm1(gap))
    return d_l, d_r


class QueryPlan:
    """Distinct finite positive times ``(subject, time)`` needing a solve.

    ``slot[k]`` maps column k (0: V, 1: L, 2: R) of every subject to its
    query index, or -1 where Λ is known without solving (time 0 or +inf).
    """

    def __init__(self, d: Dataset):
        times = np.stack([d.v, d.l, d.r], axis=1)
        n = len(d)
        self.slot = -np.ones((n, 3), dtype=int)
        subj, tq = [], []
        for i in range(n):
            seen: dict[float, int] = {}
            for k in range(3):
                t = times[i, k]
                if t == 0 or math.isinf(t):
                    continue
                if t not in seen:
                    seen[t] = len(tq)
                    subj.append(i)
                    tq.append(t)
                self.slot[i, k] = seen[t]
        self.subject = np.array(subj, dtype=int)
        self.times = np.array(tq, dtype=float)
        self.right = np.isinf(d.r)

    def assemble(self, lam_q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        padded = np.append(lam_q, 0.0)
        cols = [padded[self.slot[:, k]] for k in range(3)]
        cols[2] = np.where(self.right, np.inf, cols[2])
        return cols[0], cols[1], cols[2]


def _check_finite(lam_l, lam_r, terms):
    # log-space terms stay finite far below the 1e-300 probability floor
    bad = ~np.isfinite(terms)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise LikelihoodError(
            f"subject {i}: degenerate interval probability (Λ(L)={lam_l[i]:.6g}, Λ(R)={lam_r[i]:.6g})"
        )


def negloglik(params: MLPParams, d: Dataset, cfg: ODEConfig = ODEConfig()) -> float:
    plan = QueryPlan(d)
    lam_q = batch_solve(params, d.X[plan.subject], plan.times, cfg)
    lv, ll, lr = plan.assemble(lam_q)
    return -float(np.sum(loglik_terms(lv, ll, lr)))


def dataset_loss(params: MLPParams, d: Dataset, alpha: float = 0.0, cfg: ODEConfig = ODEConfig()) -> float:
    """Summed negative log-likelihood plus ``alpha * ||θ||_1``."""
    return negloglik(params, d, cfg) + alpha * l1_penalty(params)


def dataset_loss_grad(params: MLPParams, d: Dataset, alpha: float = 0.0, cfg: ODEConfig = ODEConfig()):
    """Return ``(loss, grad)`` of :func:`dataset_loss`."""
    plan = QueryPlan(d)
    Xq = d.X[plan.subject]
    if cfg.method == "rk4":
        sol = LockstepRK4(params, Xq, plan.times, cfg.n_steps)
        lam_q = sol.lam
    else:
        sols = [solve_adjoint(params, Xq[q], plan.times[q], cfg) for q in range(len(plan.times))]
        lam_q = np.array([s[0] for s in sols])
    lv, ll, lr = plan.assemble(lam_q)
    terms = loglik_terms(lv, ll, lr)
    _check_finite(ll, lr, terms)
    loss = -float(np.sum(terms)) + alpha * l1_penalty(params)

    # weight on ∂Λ_q/∂θ in the loss gradient, summed over the columns sharing query q
    d_l, d_r = _dloglik(ll, lr)
    col_w = np.stack([-np.ones(len(d)), -d_l, -d_r], axis=1)
    w = np.zeros(len(plan.times))
    mask = plan.slot >= 0
    np.add.at(w, plan.slot[mask], col_w[mask])

    if cfg.method == "rk4":
        grad = sol.backward(w)
    else:
        grad = sum(w[q] * sols[q][1] for q in range(len(w))) if len(w) else np.zeros(len(params))
    grad = grad + alpha * l1_subgradient(params)
    return loss, grad
