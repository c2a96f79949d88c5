"""Forecast error metrics and residual diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from greyqueue.errors import UndefinedStatisticError
from greyqueue.grey import SeriesLike, as_array

DEFAULT_MAX_LAG = 40


def _pair(pred: SeriesLike, truth: SeriesLike) -> tuple[np.ndarray, np.ndarray]:
    p, t = as_array(pred), as_array(truth)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} observations")
    if p.size == 0:
        raise ValueError("need at least one aligned pair")
    return p, t


def rmse(pred: SeriesLike, truth: SeriesLike) -> float:
    p, t = _pair(pred, truth)
    return math.sqrt(float(np.mean((p - t) ** 2)))


def mae(pred: SeriesLike, truth: SeriesLike) -> float:
    p, t = _pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def mape(pred: SeriesLike, truth: SeriesLike) -> tuple[float | None, float]:
    """Mean absolute percentage error over nonzero truths, and their fraction.

    Returns ``(None, 0.0)`` when every truth value is zero.
    """
    p, t = _pair(pred, truth)
    keep = t != 0
    coverage = float(keep.mean())
    if not keep.any():
        return None, coverage
    with np.errstate(over="ignore"):
        return 100.0 * float(np.mean(np.abs((p[keep] - t[keep]) / t[keep]))), coverage


@dataclass(frozen=True)
class ErrorSummary:
    rmse: float
    mae: float
    mape: float | None
    n: int
    mape_coverage: float = 1.0

    def as_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mae": self.mae,
            "mape": self.mape,
            "mape_coverage": self.mape_coverage,
            "n": self.n,
        }


def summarize(pred: SeriesLike, truth: SeriesLike) -> ErrorSummary:
    p, t = _pair(pred, truth)
    pct, coverage = mape(p, t)
    r, m = rmse(p, t), mae(p, t)
    # guard the power-mean inequality against last-bit rounding
    return ErrorSummary(max(r, m), m, pct, p.size, coverage)


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    acf: np.ndarray
    pacf: np.ndarray
    confidence_band: float


def _autocorr(x: np.ndarray, max_lag: int) -> np.ndarray:
    d = x - x.mean()
    denom = float(d @ d)
    if denom == 0 or not math.isfinite(denom):
        raise UndefinedStatisticError("autocorrelation undefined for a zero-variance series")
    return np.array([1.0] + [float(d[k:] @ d[:-k]) / denom for k in range(1, max_lag + 1)])


def durbin_levinson(rho: np.ndarray) -> np.ndarray:
    """Partial autocorrelations from autocorrelations ``rho[0..K]`` (``rho[0] == 1``)."""
    K = rho.size - 1
    pacf = np.zeros(K + 1)
    pacf[0] = 1.0
    if K == 0:
        return pacf
    phi = np.zeros(K + 1)
    phi[1] = pacf[1] = rho[1]
    v = 1.0 - rho[1] ** 2
    for k in range(2, K + 1):
        if v <= 0:
            # perfectly predictable past lag k-1
            break
        num = rho[k] - phi[1:k] @ rho[k - 1 : 0 : -1]
        kk = num / v
        new = phi.copy()
        new[1:k] = phi[1:k] - kk * phi[k - 1 : 0 : -1]
        new[k] = kk
        phi = new
        pacf[k] = kk
        v *= 1.0 - kk**2
    return pacf


def acf(series: SeriesLike, max_lag: int = DEFAULT_MAX_LAG) -> AcfResult:
    """Sample ACF (mean-centered, common denominator) and PACF up to ``max_lag``."""
    x = as_array(series)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    if x.size <= max_lag:
        raise ValueError(f"series of length {x.size} too short for max_lag={max_lag}")
    rho = _autocorr(x, max_lag)
    return AcfResult(np.arange(max_lag + 1), rho, durbin_levinson(rho), 1.96 / math.sqrt(x.size))


def durbin_watson(residuals: SeriesLike) -> float:
    """``sum (e_t - e_{t-1})^2 / sum e_t^2``, in [0, 4]."""
    e = as_array(residuals)
    if e.size < 2:
        raise ValueError("Durbin-Watson needs at least two residuals")
    ss = float(e @ e)
    if ss == 0:
        raise UndefinedStatisticError("Durbin-Watson undefined for all-zero residuals")
    return float(np.sum(np.diff(e) ** 2)) / ss


@dataclass(frozen=True)
class DurbinWatsonResult:
    statistic: float
    z: float
    autocorrelated: bool


def durbin_watson_test(residuals: SeriesLike, z_crit: float = 1.96) -> DurbinWatsonResult:
    """DW statistic with a large-sample normal flag (``DW ~ N(2, 4/n)`` under no autocorrelation)."""
    e = as_array(residuals)
    dw = durbin_watson(e)
    z = (dw - 2.0) / math.sqrt(4.0 / e.size)
    return DurbinWatsonResult(dw, z, abs(z) > z_crit)
