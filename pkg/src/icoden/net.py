"""Fully connected hazard network ``f(Λ, t, x)``.

Input layout is ``[t, Λ, x1..xp]``; hidden layers use ReLU and the single
output unit uses Softplus so the hazard is strictly positive.  Parameters
live in one flat vector; per layer the weight matrix ``(fan_in, fan_out)``
is stored row-major, followed by the bias.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError


@dataclass(frozen=True)
class NetworkShape:
    p: int
    hidden: tuple[int, ...] = (10, 10)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.p < 1 or any(h < 1 for h in self.hidden):
            raise ValueError(f"all widths must be >= 1: p={self.p}, hidden={self.hidden}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.p + 2, *self.hidden, 1)

    @property
    def n_params(self) -> int:
        w = self.widths
        return sum(w[k] * w[k + 1] + w[k + 1] for k in range(len(w) - 1))


@dataclass(frozen=True)
class MLPParams:
    shape: NetworkShape
    flat: np.ndarray

    def __post_init__(self):
        flat = np.array(self.flat, dtype=float).reshape(-1)
        if flat.size != self.shape.n_params:
            raise ValueError(f"expected {self.shape.n_params} parameters, got {flat.size}")
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    def __len__(self) -> int:
        return self.flat.size

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return unflatten(self.shape, self.flat)

    def with_flat(self, flat) -> "MLPParams":
        return MLPParams(self.shape, flat)


def unflatten(shape: NetworkShape, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    w = shape.widths
    out, pos = [], 0
    for k in range(len(w) - 1):
        n_in, n_out = w[k], w[k + 1]
        W = flat[pos : pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = flat[pos : pos + n_out]
        pos += n_out
        out.append((W, b))
    return out


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def init_params(shape: NetworkShape, seed: int) -> MLPParams:
    rng = np.random.default_rng(seed)
    w = shape.widths
    layers = []
    for k in range(len(w) - 1):
        bound = np.sqrt(6.0 / w[k])
        layers.append((rng.uniform(-bound, bound, size=(w[k], w[k + 1])), np.zeros(w[k + 1])))
    return MLPParams(shape, flatten(layers))


def softplus(z):
    return np.logaddexp(0.0, z)


class HazardNet:
    """Batched evaluation of the hazard network and its vector-Jacobian products.

    Covariates never change along an ODE trajectory, so their contribution to
    the first layer is projected once with :meth:`project` and reused.
    """

    def __init__(self, params: MLPParams):
        self.params = params
        self.layers = params.layers

    def project(self, X: np.ndarray) -> np.ndarray:
        W0, b0 = self.layers[0]
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.params.shape.p:
            raise DataError(f"covariates must have shape (n, {self.params.shape.p}), got {X.shape}")
        return X @ W0[2:] + b0

    def _pre(self, t, lam, xproj):
        W0 = self.layers[0][0]
        return xproj + np.multiply.outer(t, W0[0]) + np.multiply.outer(lam, W0[1])

    def __call__(self, t, lam, xproj) -> np.ndarray:
        z = self._pre(t, lam, xproj)
        for W, b in self.layers[1:]:
            z = np.maximum(z, 0.0) @ W + b
        return softplus(z[:, 0])

    def forward_cache(self, t, lam, xproj):
        zs = [self._pre(t, lam, xproj)]
        for W, b in self.layers[1:]:
            zs.append(np.maximum(zs[-1], 0.0) @ W + b)
        return softplus(zs[-1][:, 0]), zs

    def vjp(self, t, lam, xproj, cot, acc: "GradAccumulator") -> np.ndarray:
        """Return ``cot * df/dΛ`` per row and add ``cot * df/dθ`` into ``acc``."""
        _, zs = self.forward_cache(t, lam, xproj)
        return self.vjp_from_cache(zs, t, lam, cot, acc)

    def vjp_from_cache(self, zs, t, lam, cot, acc: "GradAccumulator") -> np.ndarray:
        delta = (cot * expit(zs[-1][:, 0]))[:, None]
        for k in range(len(self.layers) - 1, 0, -1):
            W = self.layers[k][0]
            a = np.maximum(zs[k - 1], 0.0)
            acc.W[k] += a.T @ delta
            acc.b[k] += delta.sum(axis=0)
            # ReLU'(0) := 0
            delta = (delta @ W.T) * (zs[k - 1] > 0)
        acc.add_first(t, lam, delta)
        return delta @ self.layers[0][0][1]


class GradAccumulator:
    """Sums parameter cotangents over many network evaluations.

    First-layer covariate weights are reconstructed lazily in :meth:`flat`
    from the per-row accumulated deltas, so the per-evaluation cost does not
    scale with the number of covariates.
    """

    def __init__(self, params: MLPParams, n_rows: int):
        self.params = params
        self.W = [np.zeros_like(W) for W, _ in params.layers]
        self.b = [np.zeros_like(b) for _, b in params.layers]
        n1 = params.shape.widths[1]
        self.g_t = np.zeros(n1)
        self.g_lam = np.zeros(n1)
        self.row_delta = np.zeros((n_rows, n1))

    def add_first(self, t, lam, delta):
        self.g_t += t @ delta
        self.g_lam += lam @ delta
        self.row_delta += delta

    def flat(self, X: np.ndarray) -> np.ndarray:
        W0 = self.W[0].copy()
        W0[0] += self.g_t
        W0[1] += self.g_lam
        W0[2:] += np.asarray(X, dtype=float).T @ self.row_delta
        b0 = self.b[0] + self.row_delta.sum(axis=0)
        return flatten([(W0, b0)] + list(zip(self.W[1:], self.b[1:])))


def _single(params: MLPParams, lambda_cum, t, x):
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != params.shape.p:
        raise DataError(f"expected {params.shape.p} covariates, got {x.shape[1]}")
    return x, np.array([float(t)]), np.array([float(lambda_cum)])


def forward(params: MLPParams, lambda_cum: float, t: float, x) -> float:
    x, t, lam = _single(params, lambda_cum, t, x)
    net = HazardNet(params)
    return float(net(t, lam, net.project(x))[0])


def vjp(params: MLPParams, lambda_cum: float, t: float, x, cotangent: float) -> tuple[float, np.ndarray]:
    x, t, lam = _single(params, lambda_cum, t, x)
    net = HazardNet(params)
    acc = GradAccumulator(params, 1)
    d_lam = net.vjp(t, lam, net.project(x), np.array([float(cotangent)]), acc)
    return float(d_lam[0]), acc.flat(x)


def l1_penalty(params) -> float:
    flat = params.flat if isinstance(params, MLPParams) else np.asarray(params, dtype=float)
    return float(np.abs(flat).sum())


def l1_subgradient(params) -> np.ndarray:
    flat = params.flat if isinstance(params, MLPParams) else np.asarray(params, dtype=float)
    return np.sign(flat)


def save_model(path, params: MLPParams, seed: int | None = None, **extra) -> None:
    doc = {
        "kind": "icoden",
        "shape": {"p": params.shape.p, "hidden": list(params.shape.hidden)},
        "seed": seed,
        "params": [float(v) for v in params.flat],
        **extra,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> tuple[MLPParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("kind", "icoden") != "icoden":
        raise DataError(f"{path} is not an ICODEN model (kind={doc.get('kind')!r})")
    shape = NetworkShape(doc["shape"]["p"], tuple(doc["shape"]["hidden"]))
    return MLPParams(shape, np.array(doc["params"], dtype=float)), doc
