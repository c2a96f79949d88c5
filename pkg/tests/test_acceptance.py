"""Acceptance suite: one test per criterion, each at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v`` (or execute this file); a
pass/fail line per criterion is printed in the terminal summary.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from greyqueue import ModelKind, fit_fourier, fit_gm11, fit_gvm, predict_residual
from greyqueue.baselines import fit_ar
from greyqueue.bench import config_from_mapping, run_bench, run_model
from greyqueue.cli import main as cli_main
from greyqueue.data import generate_queue_scenario, saturated_scenario
from greyqueue.fourier import design_matrix, grey_residuals
from greyqueue.metrics import acf, durbin_watson, mae, rmse, summarize
from oracles import gm_exponential, logistic_accumulated, logistic_increments

BENCH_RAW = {
    "seed": 2024,
    "window": 4,
    "models": ["GM", "EGM", "GVM", "EGVM", "LINEAR", "LSTAR"],
    "timing_repeats": 3,
    "scenarios": [
        {"counter_id": "SAT1", "lanes": 1, "load": 1.2, "duration": 3600, "repeat": 20},
        {"counter_id": "SAT3", "lanes": 3, "load": 1.2, "duration": 3600, "repeat": 20},
    ],
}


@pytest.fixture(scope="module")
def bench():
    cfg = config_from_mapping(BENCH_RAW)
    t0 = time.perf_counter()
    report = run_bench(cfg)
    return report, time.perf_counter() - t0


def _rel(got, want):
    got, want = np.asarray(got, float), np.asarray(want, float)
    return float(np.max(np.abs(got - want) / np.abs(want)))


# 1 -------------------------------------------------------------------------


def test_c01_gm11_exact_recovery(record_criterion):
    rng = np.random.default_rng(1)
    n, horizon = 4, 5
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        a = rng.uniform(0.01, 1.0) * rng.choice([-1, 1])
        b = rng.uniform(0.1, 10)
        x1 = rng.uniform(0.1, 10)
        x = gm_exponential(a, b, x1, n + horizon)
        fit = fit_gm11(x[:n])
        worst = max(worst, _rel(fit.a, a), _rel(fit.b, b))
        worst = max(worst, _rel(fit.forecast(np.arange(n, n + horizon)), x[n:]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 1.0
    record_criterion(1, ok, f"max rel err {worst:.3e} (tol 1e-8), {elapsed:.3f} s")
    assert worst <= 1e-8, f"max relative error {worst:.3e}"
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------


def test_c02_gvm_exact_recovery(record_criterion):
    rng = np.random.default_rng(2)
    n, horizon = 6, 5
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(100):
        a = -rng.uniform(0.05, 1.0)
        x1 = rng.uniform(0.1, 10)
        b = a / (x1 * rng.uniform(2, 50))  # carrying capacity a/b above x1
        x = logistic_increments(a, b, x1, n + horizon)
        fit = fit_gvm(x[:n])
        worst = max(worst, _rel(fit.a, a), _rel(fit.b, b))
        k = np.arange(n, n + horizon)
        truth = logistic_accumulated(a, b, x1, k + 1) - logistic_accumulated(a, b, x1, k)
        worst = max(worst, _rel(fit.forecast(k), truth))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 1.0
    record_criterion(2, ok, f"max rel err {worst:.3e} (tol 1e-6), {elapsed:.3f} s")
    assert worst <= 1e-6, f"max relative error {worst:.3e}"
    assert elapsed < 1.0


# 3 -------------------------------------------------------------------------


def test_c03_fourier_correction(record_criterion):
    rng = np.random.default_rng(3)
    worst_ratio = 0.0
    projection_ok = True
    for i in range(100):
        x = rng.uniform(1, 60, 21)
        fitter = fit_gm11 if i % 2 == 0 else fit_gvm
        fit = fitter(x)
        eps = grey_residuals(fit, x)
        model = fit_fourier(eps)
        corrected = fit.fitted() + predict_residual(model, np.arange(2, 22))
        resid = x[1:] - corrected
        worst_ratio = max(worst_ratio, math.sqrt(np.mean(resid**2)) / (1e-6 * (1 + np.linalg.norm(x))))
        projection_ok &= bool(np.sum(resid**2) <= np.sum(eps**2) * (1 + 1e-12))
    interp_ok = worst_ratio <= 1.0
    record_criterion(
        3,
        interp_ok and projection_ok,
        f"interpolation: worst RMSE/tol = {worst_ratio:.3e}; projection SSE property: {projection_ok}",
    )
    assert projection_ok
    assert interp_ok, f"corrected in-sample RMSE exceeds tolerance by {worst_ratio:.3e}x"


# 4 -------------------------------------------------------------------------


def _beats(best, design, y, coef, rng, trials=1000):
    scale = 1e-3 * (np.abs(coef) + 1e-6) * np.exp(rng.uniform(-3, 3, (trials, 1)))
    cands = coef + rng.normal(size=(trials, coef.size)) * scale
    norms = np.linalg.norm(y[None, :] - cands @ design.T, axis=1)
    return bool(np.all(best <= norms * (1 + 1e-12)))


def test_c04_least_squares_optimality(record_criterion):
    rng = np.random.default_rng(4)
    results = {}
    for kind in ("GM11", "GVM"):
        ok = True
        for _ in range(20):
            x = rng.uniform(1, 40, rng.integers(4, 12))
            fit = (fit_gm11 if kind == "GM11" else fit_gvm)(x)
            acc = np.cumsum(x)
            z = 0.5 * (acc[:-1] + acc[1:])
            B = np.column_stack([-z, np.ones_like(z) if kind == "GM11" else z * z])
            coef = np.array([fit.a, fit.b])
            ok &= _beats(np.linalg.norm(x[1:] - B @ coef), B, x[1:], coef, rng)
        results[kind] = ok
    ok = True
    for _ in range(20):
        z = np.cumsum(rng.normal(size=300)) + 50
        m = fit_ar(z, 3)
        X = np.column_stack([np.ones(z.size - 3), z[2:-1], z[1:-2], z[:-3]])
        coef = np.array([m.mu, *m.phi])
        ok &= _beats(np.linalg.norm(z[3:] - X @ coef), X, z[3:], coef, rng)
    results["AR"] = ok
    ok = True
    for _ in range(20):
        eps = rng.normal(size=rng.integers(3, 25))
        model = fit_fourier(eps)
        P = design_matrix(np.arange(2, eps.size + 2), model.period, model.harmonics)
        ok &= _beats(np.linalg.norm(eps - P @ model.coefficients), P, eps, model.coefficients, rng)
    results["Fourier"] = ok
    record_criterion(4, all(results.values()), ", ".join(f"{k}={v}" for k, v in results.items()))
    assert all(results.values()), results


# 5 -------------------------------------------------------------------------


def test_c05_directional_ordering(bench, record_criterion):
    report, elapsed = bench
    med = {m: float(np.median(report.values(m, "rmse", kind="avg", regime="saturated"))) for m in report.config.models}
    n_series = report.values("GVM", "rmse", kind="avg", regime="saturated").size
    ok = (
        n_series >= 20
        and med["EGVM"] <= med["GVM"] < med["LINEAR"]
        and med["GM"] >= 2 * med["GVM"]
        and elapsed < 60
    )
    detail = ", ".join(f"{k}={v:.2f}" for k, v in med.items())
    record_criterion(5, ok, f"median avg RMSE over {n_series} saturated series: {detail}; bench {elapsed:.1f} s")
    assert elapsed < 60
    assert med["EGVM"] <= med["GVM"], detail
    assert med["GVM"] < med["LINEAR"], detail
    assert med["GM"] >= 2 * med["GVM"], detail


# 6 -------------------------------------------------------------------------


def test_c06_multilane_robustness(bench, record_criterion):
    report, _ = bench
    rows = [r for r in report.rows if r.model == "EGVM" and r.status == "ok"]
    single = float(np.median([r.summary.rmse for r in rows if r.lanes == 1]))
    multi = float(np.median([r.summary.rmse for r in rows if r.lanes > 1]))
    ok = multi <= 3 * single
    record_criterion(6, ok, f"EGVM median RMSE multi={multi:.2f}, single={single:.2f}, ratio={multi / single:.2f} (tol 3)")
    assert ok


# 7 -------------------------------------------------------------------------


def test_c07_metric_correctness(record_criterion):
    checks = [
        rmse([1, 2, 3], [1, 2, 3]) == 0.0,
        rmse([3, 4, 5], [1, 2, 3]) == 2.0,
        rmse([1, 2], [3, 2]) == math.sqrt(2),
        mae([1, 2, 3], [1, 2, 3]) == 0.0,
        mae([3, 4, 5], [1, 2, 3]) == 2.0,
        mae([1, 2], [3, 2]) == 1.0,
        durbin_watson(np.full(10, 2.0)) == 0.0,
        durbin_watson(np.tile([1.0, -1.0], 50)) == 4 * 99 / 100,
        acf(np.arange(1.0, 30.0), 3).acf[0] == 1.0,
    ]
    x = np.tile([1.0, -1.0], 500)
    checks.append(abs(acf(x, 1).acf[1] + 1) < 2e-3)
    e = np.random.default_rng(7).normal(size=1000)
    checks.append(abs(durbin_watson(e) - 2) < 0.2)
    res = acf(e, 20)
    checks.append(np.mean(np.abs(res.acf[1:]) < 3 / math.sqrt(1000)) >= 0.95)
    checks.append(res.pacf[1] == res.acf[1])
    rng = np.random.default_rng(8)
    inequality = all(
        (s := summarize(rng.normal(size=n), rng.normal(size=n))).rmse >= s.mae for n in rng.integers(1, 200, 1000)
    )
    ok = all(checks) and inequality
    record_criterion(7, ok, f"{sum(checks)}/{len(checks)} hand examples, RMSE>=MAE on 1000 pairs: {inequality}")
    assert ok


# 8 -------------------------------------------------------------------------


def test_c08_causality_audit(record_criterion):
    cfg = config_from_mapping({"seed": 5, "timing_repeats": 1, "models": BENCH_RAW["models"]})
    ds = generate_queue_scenario(saturated_scenario(31, lanes=3))[0]
    rng = np.random.default_rng(8)
    base = {m: run_model(m, ds, cfg) for m in cfg.models}
    violations = 0
    checked = 0
    for j in rng.choice(len(ds.series), 10, replace=False):
        vals = ds.series.values.copy()
        vals[j] += 50.0
        mutated = type(ds)(
            ds.counter_id, ds.lanes, ds.intersection, ds.kind,
            type(ds.series)(vals, label=ds.series.label), ds.saturated,
        )
        for m in cfg.models:
            b, a = base[m], run_model(m, mutated, cfg)
            past = b.times <= j
            checked += int(past.sum())
            violations += int(np.sum(b.raw[past] != a.raw[past]))
    ok = violations == 0
    record_criterion(8, ok, f"{violations} changed past predictions out of {checked} checked (10 mutations x 6 models)")
    assert ok


# 9 -------------------------------------------------------------------------


def test_c09_determinism(tmp_path, record_criterion):
    import yaml

    cfg = tmp_path / "bench.yaml"
    cfg.write_text(yaml.safe_dump(BENCH_RAW), encoding="utf-8")
    runner = CliRunner()
    for name in ("a", "b"):
        res = runner.invoke(cli_main, ["--config", str(cfg), "--out", str(tmp_path / name), "bench"])
        assert res.exit_code == 0, res.output
    files = ["report.json", "report.csv", "summary.csv", "groups.csv"]
    same = {f: (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files}
    ok = all(same.values())
    record_criterion(9, ok, "byte-identical: " + ", ".join(f"{f}={v}" for f, v in same.items()))
    assert ok


# 10 ------------------------------------------------------------------------


def test_c10_timing_structure(bench, record_criterion):
    report, _ = bench
    grey = [r for r in report.rows if r.model in ("GM", "EGM", "GVM", "EGVM")]
    zero_train = all(r.fit_time_s == 0.0 for r in grey)

    def per_step(model):
        return float(np.mean([r.predict_time_s / r.n_steps for r in report.rows if r.model == model]))

    t = {m: per_step(m) for m in ("GM", "EGM", "GVM", "EGVM")}
    ok = zero_train and t["EGM"] > t["GM"] and t["EGVM"] > t["GVM"]
    detail = ", ".join(f"{m}={v * 1e6:.2f}us/step" for m, v in t.items())
    record_criterion(10, ok, f"grey train time zero: {zero_train}; {detail}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
