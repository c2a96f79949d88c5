"""Error metrics and residual diagnostics."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from statsmodels.stats.stattools import durbin_watson as sm_dw
from statsmodels.tsa.stattools import acf as sm_acf
from statsmodels.tsa.stattools import pacf as sm_pacf

from greyqueue.errors import UndefinedStatisticError
from greyqueue.metrics import acf, durbin_watson, durbin_watson_test, mae, mape, rmse, summarize

vals = st.floats(-1e4, 1e4, allow_nan=False)


def test_rmse_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([3, 4, 5], [1, 2, 3]) == 2.0
    assert rmse([1, 2], [3, 2]) == math.sqrt(2)


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0.0
    assert mae([3, 4, 5], [1, 2, 3]) == 2.0
    assert mae([1, 2], [3, 2]) == 1.0


def test_length_mismatch_and_empty():
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        mae([], [])


def test_mape_skips_zero_truth():
    pct, cov = mape([1.0, 2.0, 5.0], [0.0, 1.0, 4.0])
    assert pct == pytest.approx(100 * (1.0 + 0.25) / 2)
    assert cov == pytest.approx(2 / 3)
    assert mape([1.0], [0.0]) == (None, 0.0)


def test_summarize_examples():
    s = summarize([1, 2, 3], [1, 2, 3])
    assert (s.rmse, s.mae, s.mape, s.n) == (0.0, 0.0, 0.0, 3)
    s = summarize([3, 4, 5], [1, 2, 3])
    assert s.rmse == 2.0 and s.mae == 2.0


@given(st.integers(1, 50).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=vals), arrays(np.float64, n, elements=vals))))
def test_rmse_at_least_mae(pair):
    p, t = pair
    s = summarize(p, t)
    assert s.rmse >= s.mae >= 0


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=vals), arrays(np.float64, n, elements=vals))), st.randoms())
def test_metrics_sign_and_order_invariant(pair, rnd):
    p, t = pair
    idx = list(range(p.size))
    rnd.shuffle(idx)
    assert rmse(p[idx], t[idx]) == pytest.approx(rmse(p, t), rel=1e-12, abs=1e-12)
    assert mae(2 * t - p, t) == pytest.approx(mae(p, t), rel=1e-12, abs=1e-9)


def test_acf_against_statsmodels():
    rng = np.random.default_rng(0)
    x = np.cumsum(rng.normal(size=500)) * 0.1 + rng.normal(size=500)
    res = acf(x, 40)
    assert np.allclose(res.acf, sm_acf(x, nlags=40, fft=False), atol=1e-12)
    assert np.allclose(res.pacf, sm_pacf(x, nlags=40, method="ldb"), atol=1e-10)
    assert res.acf[0] == 1.0 and res.pacf[1] == pytest.approx(res.acf[1])
    assert res.confidence_band == pytest.approx(1.96 / math.sqrt(500))
    assert np.all(np.abs(res.acf) <= 1) and np.all(np.abs(res.pacf) <= 1 + 1e-12)


def test_acf_white_noise_inside_band():
    x = np.random.default_rng(1).normal(size=1000)
    res = acf(x, 20)
    assert np.mean(np.abs(res.acf[1:]) < 3 / math.sqrt(1000)) >= 0.95


def test_acf_alternation():
    x = np.tile([1.0, -1.0], 500)
    assert acf(x, 1).acf[1] == pytest.approx(-1.0, abs=2e-3)


def test_acf_ar1_theory():
    rng = np.random.default_rng(2)
    e = rng.normal(size=20000)
    x = np.zeros_like(e)
    for t in range(1, x.size):
        x[t] = 0.8 * x[t - 1] + e[t]
    res = acf(x, 5)
    band = 3 / math.sqrt(x.size) * 4
    assert np.all(np.abs(res.acf - 0.8 ** np.arange(6)) < band)


def test_acf_errors():
    with pytest.raises(UndefinedStatisticError):
        acf(np.full(10, 2.0), 3)
    with pytest.raises(ValueError):
        acf(np.arange(5.0), 5)


def test_durbin_watson_cases():
    e = np.random.default_rng(3).normal(size=1000)
    assert durbin_watson(e) == pytest.approx(sm_dw(e), rel=1e-12)
    assert abs(durbin_watson(e) - 2) < 0.2
    assert durbin_watson(np.full(20, 1.5)) == 0.0
    alt = np.tile([1.0, -1.0], 50)
    assert durbin_watson(alt) == pytest.approx(4 * 99 / 100)
    with pytest.raises(UndefinedStatisticError):
        durbin_watson(np.zeros(5))
    with pytest.raises(ValueError):
        durbin_watson([1.0])


def test_durbin_watson_flag():
    e = np.random.default_rng(4).normal(size=2000)
    assert not durbin_watson_test(e).autocorrelated
    walk = np.cumsum(e)
    assert durbin_watson_test(walk - walk.mean()).autocorrelated
