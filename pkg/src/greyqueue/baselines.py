"""Linear AR and logistic smooth-transition AR baselines.

Both are fit once on a training split and then applied one step ahead
using the true lagged observations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from greyqueue.errors import SingularFitError
from greyqueue.grey import SeriesLike, as_array
from greyqueue.linalg import lstsq_qr

DEFAULT_AR_ORDER = 3
DEFAULT_GAMMAS = (1.0, 10.0, 100.0)
DEFAULT_QUANTILES = tuple(np.round(np.arange(0.1, 0.91, 0.1), 2))


@dataclass(frozen=True)
class ArModel:
    mu: float
    phi: tuple[float, ...]

    @property
    def order(self) -> int:
        return len(self.phi)

    @property
    def n_params(self) -> int:
        return 1 + self.order

    @property
    def max_lag(self) -> int:
        return self.order

    def params(self) -> dict[str, float]:
        out = {"mu": self.mu}
        out.update({f"phi{i + 1}": v for i, v in enumerate(self.phi)})
        return out


@dataclass(frozen=True)
class LstarModel:
    """Two-regime AR blended by ``G(Z_t) = 1 / (1 + exp(-gamma (Z_t - th)))``.

    Regime coefficients are ``(intercept, c_0, ..., c_order)`` where ``c_j``
    multiplies ``Z_{t - j*delta}``.
    """

    low_coeffs: tuple[float, ...]
    high_coeffs: tuple[float, ...]
    gamma: float
    th: float
    delta: int
    L: int
    H: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not (1 <= self.L <= 5 and 1 <= self.H <= 5):
            raise ValueError("regime orders must lie in 1..5")
        if self.delta < 1:
            raise ValueError("delta must be a positive integer")
        if len(self.low_coeffs) != self.L + 2 or len(self.high_coeffs) != self.H + 2:
            raise ValueError("coefficient count does not match regime order")

    @property
    def n_params(self) -> int:
        return len(self.low_coeffs) + len(self.high_coeffs) + 2

    @property
    def max_lag(self) -> int:
        return max(self.L, self.H) * self.delta + 1

    def params(self) -> dict[str, float]:
        out = {"phi1": self.low_coeffs[0]}
        out.update({f"phi1{j}": c for j, c in enumerate(self.low_coeffs[1:])})
        out["phi2"] = self.high_coeffs[0]
        out.update({f"phi2{j}": c for j, c in enumerate(self.high_coeffs[1:])})
        out["th"] = self.th
        out["gamma"] = self.gamma
        return out


Model = Union[ArModel, LstarModel]


def transition(z, gamma: float, th: float):
    """Logistic weight in (0, 1), numerically safe for large ``gamma``."""
    arg = np.clip(-gamma * (np.asarray(z, dtype=np.float64) - th), -700.0, 700.0)
    out = 1.0 / (1.0 + np.exp(arg))
    return float(out) if np.ndim(z) == 0 else out


# ------------------------------------------------------------------- AR


def _lag_matrix(x: np.ndarray, lags: Sequence[int], first: int) -> np.ndarray:
    """Columns ``x[t - lag]`` for every target t >= ``first``."""
    n = x.size
    return np.column_stack([x[first - lag : n - lag] for lag in lags])


def fit_ar(train: SeriesLike, m: int = DEFAULT_AR_ORDER) -> ArModel:
    """OLS of ``Z_{t+1}`` on ``(1, Z_t, ..., Z_{t-m+1})``."""
    x = as_array(train)
    if m < 1:
        raise ValueError("AR order must be >= 1")
    if x.size <= m + 1:
        raise ValueError(f"training series of length {x.size} too short for AR({m})")
    X = np.column_stack([np.ones(x.size - m), _lag_matrix(x, range(1, m + 1), m)])
    coef = lstsq_qr(X, x[m:])
    return ArModel(float(coef[0]), tuple(float(c) for c in coef[1:]))


def predict_ar(model: ArModel, history: SeriesLike) -> float:
    """``mu + sum phi_i Z_{t-i+1}``; ``history`` is chronological, newest last."""
    h = as_array(history)
    if h.size != model.order:
        raise ValueError(f"history must hold exactly {model.order} values")
    return model.mu + float(np.dot(model.phi, h[::-1]))


# ---------------------------------------------------------------- LSTAR


def _lstar_design(x: np.ndarray, L: int, H: int, delta: int, gamma: float, th: float, first: int):
    g = transition(x[first - 1 : x.size - 1], gamma, th)
    low = np.column_stack([np.ones(g.size), _lag_matrix(x, [1 + j * delta for j in range(L + 1)], first)])
    high = np.column_stack([np.ones(g.size), _lag_matrix(x, [1 + j * delta for j in range(H + 1)], first)])
    return np.column_stack([low * (1.0 - g)[:, None], high * g[:, None]])


def fit_lstar(
    train: SeriesLike,
    L: int = 2,
    H: int = 2,
    delta: int = 1,
    *,
    gammas: Sequence[float] = DEFAULT_GAMMAS,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
) -> LstarModel:
    """Grid search over (gamma, threshold) with per-point OLS for the regimes.

    The threshold grid is the given quantiles of the transition variable
    ``Z_t``. Ties keep the lowest gamma, then the lowest threshold.
    """
    x = as_array(train)
    first = max(L, H) * delta + 1
    if x.size < first + 2 * (L + H + 4):
        raise ValueError(f"training series of length {x.size} too short for LSTAR({L},{H},{delta})")
    y = x[first:]
    ths = np.quantile(x[first - 1 : x.size - 1], quantiles)
    best = None
    for gamma in sorted(gammas):
        for th in np.unique(ths):
            X = _lstar_design(x, L, H, delta, gamma, th, first)
            try:
                coef = lstsq_qr(X, y)
            except SingularFitError:
                continue
            sse = float(np.sum((y - X @ coef) ** 2))
            if best is None or sse < best[0]:
                best = (sse, gamma, float(th), coef)
    if best is None:
        raise SingularFitError("every LSTAR grid point produced a singular design")
    _, gamma, th, coef = best
    return LstarModel(
        low_coeffs=tuple(float(c) for c in coef[: L + 2]),
        high_coeffs=tuple(float(c) for c in coef[L + 2 :]),
        gamma=float(gamma),
        th=th,
        delta=delta,
        L=L,
        H=H,
    )


def lstar_regimes(model: LstarModel, history: SeriesLike) -> tuple[float, float, float]:
    """Low-regime prediction, high-regime prediction and transition weight."""
    h = as_array(history)
    if h.size < model.max_lag:
        raise ValueError(f"history must hold at least {model.max_lag} values")

    def regime(coefs):
        lags = [h[-1 - j * model.delta] for j in range(len(coefs) - 1)]
        return coefs[0] + float(np.dot(coefs[1:], lags))

    g = transition(h[-1], model.gamma, model.th)
    return regime(model.low_coeffs), regime(model.high_coeffs), g


def predict_lstar(model: LstarModel, history: SeriesLike) -> float:
    low, high, g = lstar_regimes(model, history)
    return (1.0 - g) * low + g * high


# ------------------------------------------------------------ shared API


def predict(model: Model, history: SeriesLike) -> float:
    if isinstance(model, ArModel):
        return predict_ar(model, as_array(history)[-model.order :])
    return predict_lstar(model, history)


def one_step_predictions(model: Model, series: SeriesLike, start: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One-step-ahead predictions for targets ``start..n-1`` from true lags.

    Returns ``(targets, raw_predictions)``; the caller decides on clamping.
    """
    x = as_array(series)
    first = model.max_lag if start is None else max(start, model.max_lag)
    if x.size <= first:
        raise ValueError(f"series of length {x.size} too short for {model.max_lag} lags")
    targets = np.arange(first, x.size)
    if isinstance(model, ArModel):
        X = _lag_matrix(x, range(1, model.order + 1), first)
        raw = model.mu + X @ np.asarray(model.phi)
    else:
        X = _lstar_design(x, model.L, model.H, model.delta, model.gamma, model.th, first)
        raw = X @ np.asarray(model.low_coeffs + model.high_coeffs)
    return targets, raw


def aic(sse: float, n: int, n_params: int) -> float:
    """Gaussian-likelihood AIC ``n ln(SSE / n) + 2 p``."""
    if sse <= 0:
        return -math.inf
    return n * math.log(sse / n) + 2 * n_params


def model_selection_aic(candidates: Sequence[Model], train: SeriesLike) -> Model:
    """Candidate with the lowest AIC on a common in-sample target range.

    Ties go to the candidate with fewer parameters.
    """
    if not candidates:
        raise ValueError("no candidate models")
    x = as_array(train)
    start = max(c.max_lag for c in candidates)
    scored = []
    for i, cand in enumerate(candidates):
        targets, raw = one_step_predictions(cand, x, start)
        sse = float(np.sum((x[targets] - raw) ** 2))
        scored.append((aic(sse, targets.size, cand.n_params), cand.n_params, i))
    return candidates[min(scored)[2]]
