"""Acceptance criteria, one test per criterion.

Each check prints ``criterion N <name>: PASS|FAIL (<detail>)``; the lines are
repeated in the pytest terminal summary.  Run as a script to print them
without pytest:  ``python tests/test_acceptance.py [N ...]``.
Criteria 5 to 7 are replicated benchmarks and take most of the runtime.
"""
from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import (  # noqa: E402
    fd_loss_gradient,
    kaplan_meier,
    min_preactivation,
    naive_loglik_exact,
    random_dataset,
    random_params,
    random_turnbull_dataset,
    rel_errors,
    turnbull_matrix,
    turnbull_oracle,
)
from icoden.benchmark import BenchmarkConfig, run_benchmark, summarize  # noqa: E402
from icoden.data import Dataset  # noqa: E402
from icoden.likelihood import dataset_loss_grad, loglik_terms  # noqa: E402
from icoden.metrics import mse_survival  # noqa: E402
from icoden.net import MLPParams, NetworkShape  # noqa: E402
from icoden.ode import ODEConfig, batch_solve, solve_cumhaz  # noqa: E402
from icoden.simulate import gen_simple  # noqa: E402
from icoden.subgroup import identify_subgroups, turnbull  # noqa: E402
from icoden.train import TrainConfig, train  # noqa: E402

RESULTS: dict[int, str] = {}


def record(n: int, name: str, ok: bool, detail: str, seconds: float) -> None:
    line = f"criterion {n} {name}: {'PASS' if ok else 'FAIL'} ({detail}; {seconds:.0f}s)"
    RESULTS[n] = line
    print(line, flush=True)


# ---------------------------------------------------------------- checks


def check_gradient():
    t0 = time.perf_counter()
    worst, resampled = 0.0, 0
    for i in range(20):
        p = (1, 3, 5)[i % 3]
        s = i
        while True:
            params, d = random_params(p, (8, 8), seed=s), random_dataset(5, p, seed=s)
            # central differences straddling a ReLU kink do not estimate a derivative
            if min_preactivation(params, d) > 1e-4:
                break
            s += 1000
            resampled += 1
        _, g = dataset_loss_grad(params, d, 0.05)
        errs = rel_errors(g, fd_loss_gradient(params, d, 0.05, h=1e-5), floor=1e-8)
        worst = max(worst, float(errs.max()))
    secs = time.perf_counter() - t0
    return worst <= 1e-4 and secs < 120, f"max rel err {worst:.2e}, {resampled} kink resamples", secs


def _zero_params(p=1, hidden=(8, 8)):
    shape = NetworkShape(p, hidden)
    return MLPParams(shape, np.zeros(shape.n_params))


def check_ode():
    t0 = time.perf_counter()
    zero = _zero_params()
    err = max(abs(solve_cumhaz(zero, [0.0], t) - t * math.log(2)) for t in (0.5, 1.0, 3.0))
    # Λ' = cos(t)(Λ + 1) through the solver's rhs hook; its error stays above rounding
    rhs = lambda lam, t: np.cos(t) * (lam + 1)
    ref = solve_cumhaz(zero, [0.0], 3.0, ODEConfig(n_steps=2048), rhs=rhs)
    errs = [abs(solve_cumhaz(zero, [0.0], 3.0, ODEConfig(n_steps=n), rhs=rhs) - ref) for n in (8, 16, 32)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = err <= 1e-8 and min(ratios) >= 8
    return ok, f"const-hazard err {err:.1e}, halving ratios {ratios[0]:.1f}/{ratios[1]:.1f}", time.perf_counter() - t0


def check_batch():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    params = random_params(3, seed=11)
    X, T = rng.normal(size=(50, 3)), rng.uniform(0, 5, 50)
    seq = np.array([solve_cumhaz(params, X[i], T[i]) for i in range(50)])
    diff = float(np.max(np.abs(batch_solve(params, X, T) - seq)))
    return diff <= 1e-9, f"max abs diff {diff:.1e}", time.perf_counter() - t0


SIMPLE_CFG = TrainConfig(hidden=(10, 10), alpha=0.01, batch_size=100, epochs=50, learning_rate=0.1, patience=None)
_simple_cache: dict = {}


def simple_example():
    """Model trained on the two-group example, shared by criteria 4 and 10."""
    if not _simple_cache:
        t0 = time.perf_counter()
        d, _ = gen_simple(1000, seed=1)
        test, truth = gen_simple(1000, seed=2)
        params, report = train(d, SIMPLE_CFG)
        _simple_cache.update(params=params, report=report, test=test, truth=truth,
                             seconds=time.perf_counter() - t0)
    return _simple_cache


def check_simple():
    t0 = time.perf_counter()
    s = simple_example()
    mse = mse_survival(s["params"], s["test"].X, s["truth"])
    v = s["report"].val_loss
    drift = abs(v[29] - v[49]) / abs(v[49])
    secs = time.perf_counter() - t0
    ok = mse <= 0.02 and drift <= 0.02 and secs < 600
    return ok, f"mse {mse:.5f}, val-loss change epoch 30->50 {100 * drift:.2f}%", secs


def _benchmark(scenario, p, replicates):
    cfg = BenchmarkConfig(scenario=scenario, p=p, replicates=replicates)
    rows = run_benchmark(cfg)
    return {r["method"]: (r["mse_mean"], r["mse_sd"]) for r in summarize(cfg, rows)}


def check_scenario4():
    t0 = time.perf_counter()
    s = _benchmark(4, 20, 10)
    mean, sd = s["icoden"]
    secs = time.perf_counter() - t0
    ok = 0.03 <= mean <= 0.07 and secs < 90 * 60
    return ok, f"ICODEN {mean:.4f} ({sd:.4f}) vs reference 0.046 (0.003); Weibull-PH {s['weibull_ph'][0]:.4f}", secs


def check_scenario1():
    t0 = time.perf_counter()
    s = _benchmark(1, 20, 5)
    ic, wb = s["icoden"][0], s["weibull_ph"][0]
    secs = time.perf_counter() - t0
    return wb < ic and secs < 45 * 60, f"Weibull-PH {wb:.4f} < ICODEN {ic:.4f} required", secs


def check_scenario3():
    t0 = time.perf_counter()
    s = _benchmark(3, 50, 5)
    ic, wb = s["icoden"][0], s["weibull_ph"][0]
    secs = time.perf_counter() - t0
    return ic < wb and secs < 60 * 60, f"ICODEN {ic:.4f} < Weibull-PH {wb:.4f} required", secs


def check_turnbull():
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(2024)
    for _ in range(100):
        d = random_turnbull_dataset(rng, max_n=6, max_intervals=4)
        fit = turnbull(d)
        A = turnbull_matrix(d, fit.left, fit.right)
        ref, unique = turnbull_oracle(A)
        # masses are only identified through A·m when support columns are dependent
        gap = np.max(np.abs(fit.masses - ref)) if unique else np.max(np.abs(A @ (fit.masses - ref)))
        worst = max(worst, float(gap))
    km_worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 15))
        t = rng.uniform(0.5, 5.0, n)
        ev = (rng.random(n) < 0.6).astype(int)
        if not ev.any():
            continue
        d = Dataset(np.zeros(n), np.where(ev == 1, t - 1e-9, t), np.where(ev == 1, t, np.inf), np.zeros((n, 1)))
        at = np.sort(t[ev == 1])
        lo, up = turnbull(d).band(at)
        km = kaplan_meier(t, ev, at)
        km_worst = max(km_worst, float(np.max(np.abs(lo - km))), float(np.max(np.abs(up - km))))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-6 and km_worst <= 1e-6 and secs < 120
    return ok, f"max mass gap {worst:.1e}, max KM gap {km_worst:.1e}", secs


def check_stability():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    n = 110_000
    ll = rng.uniform(0, 600, n)
    gap = 10 ** rng.uniform(-14, math.log10(50), n)
    lr = ll + gap
    lr[rng.random(n) < 0.1] = np.inf
    lv = np.where(rng.random(n) < 0.5, 0.0, ll * rng.random(n))
    keep = lr > ll  # drop gaps that round away
    lv, ll, lr = lv[keep][:100_000], ll[keep][:100_000], lr[keep][:100_000]
    got = loglik_terms(lv, ll, lr)
    ref = np.array([naive_loglik_exact(a, b, c) for a, b, c in zip(lv, ll, lr)])
    worst = float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref))))
    tiny = [float(loglik_terms(0.0, b, b + 1e-14)) for b in (0.0, 0.5, 1.0, 5.0)]
    finite = all(math.isfinite(v) for v in tiny)
    ok = worst <= 1e-12 and finite
    return ok, f"{len(ll)} inputs, max err {worst:.1e} (abs, rel above 1); finite at ΔΛ=1e-14: {finite}", \
        time.perf_counter() - t0


def check_subgroups():
    t0 = time.perf_counter()
    s = simple_example()
    test = s["test"]
    res = identify_subgroups(s["params"], test, t_star=0.5, K=2)
    x = test.X[:, 0].astype(int)
    agree = max(float(np.mean(res.labels == x)), float(np.mean(res.labels != x)))
    secs = time.perf_counter() - t0 + s["seconds"]
    return agree >= 0.9 and secs < 600, f"agreement {100 * agree:.1f}% with the X partition", secs


CRITERIA = {
    1: ("gradient correctness", check_gradient),
    2: ("ODE accuracy", check_ode),
    3: ("batch equivalence", check_batch),
    4: ("simple example", check_simple),
    5: ("scenario 4 p=20 MSE", check_scenario4),
    6: ("scenario 1 p=20 ordering", check_scenario1),
    7: ("scenario 3 p=50 ordering", check_scenario3),
    8: ("Turnbull oracle", check_turnbull),
    9: ("likelihood stability", check_stability),
    10: ("subgroup recovery", check_subgroups),
}


def run(n: int) -> bool:
    name, fn = CRITERIA[n]
    ok, detail, secs = fn()
    record(n, name, ok, detail, secs)
    return ok


# ---------------------------------------------------------------- pytest


def _assert(n):
    assert run(n), RESULTS[n]


def test_criterion_1_gradient():
    _assert(1)


def test_criterion_2_ode():
    _assert(2)


def test_criterion_3_batch():
    _assert(3)


def test_criterion_4_simple_example():
    _assert(4)


@pytest.mark.slow
def test_criterion_5_scenario4():
    _assert(5)


@pytest.mark.slow
def test_criterion_6_scenario1():
    _assert(6)


@pytest.mark.slow
def test_criterion_7_scenario3():
    _assert(7)


def test_criterion_8_turnbull():
    _assert(8)


def test_criterion_9_stability():
    _assert(9)


def test_criterion_10_subgroups():
    _assert(10)


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = [run(n) for n in wanted]
    sys.exit(0 if all(results) else 1)
