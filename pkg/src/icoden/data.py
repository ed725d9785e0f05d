"""Interval-censored, optionally left-truncated observations.

A subject is observed as ``(v, l, r, x)``: entry (truncation) time ``v``, an
event known to lie in ``(l, r]``, and covariates ``x``.  Right censoring is
``r = inf``; left censoring is ``l = 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

KINDS = ("continuous", "binary", "multinomial")


@dataclass(frozen=True)
class Subject:
    v: float
    l: float
    r: float
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        object.__setattr__(self, "x", x)
        _check_row(self.v, self.l, self.r, x)

    @property
    def right_censored(self) -> bool:
        return math.isinf(self.r)


@dataclass(frozen=True)
class CovariateSchema:
    names: tuple[str, ...]
    kinds: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(self.names) < 1:
            raise DataError("schema needs at least one covariate")
        if len(set(self.names)) != len(self.names):
            raise DataError("covariate names must be unique")
        if len(self.kinds) != len(self.names):
            raise DataError("kinds and names differ in length")
        bad = [k for k in self.kinds if k not in KINDS]
        if bad:
            raise DataError(f"unknown covariate kind(s): {bad}")

    @property
    def p(self) -> int:
        return len(self.names)

    @classmethod
    def default(cls, p: int, kinds: Sequence[str] | None = None) -> "CovariateSchema":
        kinds = tuple(kinds) if kinds is not None else ("continuous",) * p
        return cls(tuple(f"x{j + 1}" for j in range(p)), kinds)


def _check_row(v, l, r, x, where=""):
    if not (math.isfinite(v) and math.isfinite(l)):
        raise DataError(f"{where}v and l must be finite")
    if math.isnan(r) or r == -math.inf:
        raise DataError(f"{where}r must be a number or +inf")
    if v < 0:
        raise DataError(f"{where}v must be >= 0 (got {v})")
    if v > l:
        raise DataError(f"{where}v must not exceed l (v={v}, l={l})")
    if not l < r:
        raise DataError(f"{where}l must be strictly less than r (l={l}, r={r})")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{where}covariates must be finite")


@dataclass(frozen=True)
class Dataset:
    """Columnar collection of subjects sharing one covariate schema."""

    v: np.ndarray
    l: np.ndarray
    r: np.ndarray
    X: np.ndarray
    schema: CovariateSchema = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(-1)
        l = np.array(self.l, dtype=float).reshape(-1)
        r = np.array(self.r, dtype=float).reshape(-1)
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        n = len(l)
        if n == 0:
            raise DataError("dataset is empty")
        if not (len(v) == len(r) == X.shape[0] == n):
            raise DataError("column lengths differ")
        schema = self.schema or CovariateSchema.default(X.shape[1])
        if schema.p != X.shape[1]:
            raise DataError(f"schema has {schema.p} covariates, data has {X.shape[1]}")
        if np.isnan(r).any() or (r == -np.inf).any():
            raise DataError("r must be a number or +inf")
        for name, arr in (("v", v), ("l", l)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} must be finite")
        if (v < 0).any():
            raise DataError(f"v must be >= 0 (row {int(np.argmax(v < 0))})")
        if (v > l).any():
            raise DataError(f"v must not exceed l (row {int(np.argmax(v > l))})")
        if not (l < r).all():
            raise DataError(f"l must be strictly less than r (row {int(np.argmax(~(l < r)))})")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")
        for arr in (v, l, r, X):
            arr.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "schema", schema)

    def __len__(self) -> int:
        return len(self.l)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def has_truncation(self) -> bool:
        return bool((self.v > 0).any())

    @property
    def subjects(self) -> list[Subject]:
        return [Subject(self.v[i], self.l[i], self.r[i], self.X[i]) for i in range(len(self))]

    @classmethod
    def from_subjects(cls, subjects: Sequence[Subject], schema: CovariateSchema | None = None) -> "Dataset":
        if not subjects:
            raise DataError("dataset is empty")
        p = {len(s.x) for s in subjects}
        if len(p) != 1:
            raise DataError("subjects have differing covariate lengths")
        return cls(
            np.array([s.v for s in subjects]),
            np.array([s.l for s in subjects]),
            np.array([s.r for s in subjects]),
            np.vstack([s.x for s in subjects]),
            schema,
        )

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.v[idx], self.l[idx], self.r[idx], self.X[idx], self.schema)

    def censoring_counts(self) -> dict[str, int]:
        right = np.isinf(self.r)
        left = (self.l == 0) & ~right
        return {
            "left": int(left.sum()),
            "interval": int((~left & ~right).sum()),
            "right": int(right.sum()),
        }


@dataclass(frozen=True)
class SurvivalCurve:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.values, dtype=float)
        if t.shape != s.shape or t.ndim != 1:
            raise DataError("times and values must be 1-D arrays of equal length")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise DataError("times must start at 0 and be strictly increasing")
        if s[0] != 1.0:
            raise DataError("survival must equal 1 at t=0")
        if np.any(np.diff(s) > 0) or np.any((s < 0) | (s > 1)):
            raise DataError("survival must be non-increasing within [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", s)


def _parse_float(tok: str, row: int, col: str) -> float:
    tok = tok.strip()
    try:
        val = float(tok)
    except ValueError:
        raise DataError(f"row {row}: column {col!r} is not numeric ({tok!r})") from None
    if math.isnan(val):
        raise DataError(f"row {row}: column {col!r} is NaN")
    return val


def load_dataset(path, has_truncation: bool = False, kinds: Sequence[str] | None = None) -> Dataset:
    """Read a header-first CSV with columns ``[v,] l, r, x1..xp``.

    Row numbers in error messages count data rows from 1.
    """
    lead = 3 if has_truncation else 2
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) <= lead:
            raise DataError(f"{path}: expected {lead} interval columns plus covariates, got {header}")
        want = ["v", "l", "r"] if has_truncation else ["l", "r"]
        if header[:lead] != want:
            raise DataError(f"{path}: header must start with {want}, got {header[:lead]}")
        names = header[lead:]
        v, l, r, X = [], [], [], []
        for i, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {i}: expected {len(header)} fields, got {len(row)}")
            vals = [_parse_float(tok, i, col) for tok, col in zip(row, header)]
            vi = vals[0] if has_truncation else 0.0
            li, ri = vals[lead - 2], vals[lead - 1]
            xi = np.array(vals[lead:])
            _check_row(vi, li, ri, xi, where=f"row {i}: ")
            v.append(vi)
            l.append(li)
            r.append(ri)
            X.append(xi)
    if not l:
        raise DataError(f"{path}: no data rows")
    schema = CovariateSchema(tuple(names), tuple(kinds) if kinds else ("continuous",) * len(names))
    return Dataset(np.array(v), np.array(l), np.array(r), np.vstack(X), schema)


def _fmt(x: float) -> str:
    return "inf" if x == math.inf else repr(float(x))


def write_dataset(d: Dataset, path, has_truncation: bool | None = None) -> None:
    if has_truncation is None:
        has_truncation = d.has_truncation
    if not has_truncation and d.has_truncation:
        raise DataError("dataset has truncation times; write with has_truncation=True")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        lead = ["v", "l", "r"] if has_truncation else ["l", "r"]
        w.writerow(lead + list(d.schema.names))
        for i in range(len(d)):
            row = [d.v[i]] if has_truncation else []
            row += [d.l[i], d.r[i], *d.X[i]]
            w.writerow([_fmt(x) for x in row])


def _apportion(n: int, fractions: Sequence[float]) -> list[int]:
    raw = [n * f for f in fractions]
    sizes = [math.floor(x) for x in raw]
    # largest remainder, ties broken by position
    order = sorted(range(len(raw)), key=lambda k: (-(raw[k] - sizes[k]), k))
    for k in order[: n - sum(sizes)]:
        sizes[k] += 1
    return sizes


def split_dataset(d: Dataset, fractions: Sequence[float], seed: int) -> list[Dataset]:
    """Shuffle with ``seed`` and cut into parts sized by largest-remainder rounding.

    Raises DataError if a part would end up empty.
    """
    fractions = list(fractions)
    if not fractions or any(not 0 < f < 1 for f in fractions):
        raise DataError(f"each fraction must lie in (0, 1): {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must sum to 1: {fractions}")
    sizes = _apportion(len(d), fractions)
    if min(sizes) == 0:
        raise DataError(f"{len(d)} subjects cannot be split into {fractions} without an empty part")
    perm = np.random.default_rng(seed).permutation(len(d))
    cuts = np.cumsum(sizes)[:-1]
    return [d.take(np.sort(part)) for part in np.split(perm, cuts)]
