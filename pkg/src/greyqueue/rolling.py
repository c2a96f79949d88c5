"""Rolling-window one-step-ahead driver for the Grey models."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from greyqueue.fourier import (
    MIN_RESIDUALS,
    CorrectionDisabled,
    fit_fourier,
    fourier_correction_batch,
    grey_residuals,
    predict_residual,
)
from greyqueue.grey import (
    DEFAULT_NOISE_VARIANCE,
    MIN_WINDOW,
    ModelKind,
    Series,
    SeriesLike,
    fit_batch,
    fit_gm11,
    fit_gvm,
    gm11_restored,
    gvm_restored,
    noise_stream,
    perturb,
)


class Correction(str, enum.Enum):
    NONE = "none"
    FOURIER = "fourier"


@dataclass(frozen=True)
class RollingForecast:
    """One-step-ahead predictions aligned to ``targets`` (indices into the input).

    ``raw`` holds the unclamped values; ``fallback`` marks steps where the
    fit failed and the last observation was used instead.
    """

    predictions: np.ndarray
    targets: np.ndarray
    raw: np.ndarray
    fallback: np.ndarray
    window: int
    model_kind: ModelKind
    correction: Correction
    horizon: int = 1

    @property
    def fallback_count(self) -> int:
        return int(self.fallback.sum())


_FITTERS = {ModelKind.GM11: fit_gm11, ModelKind.GVM: fit_gvm}
_RESTORED = {ModelKind.GM11: gm11_restored, ModelKind.GVM: gvm_restored}


def one_step(
    window: SeriesLike,
    kind: ModelKind,
    correction: Correction = Correction.NONE,
    noise: np.ndarray | None = None,
) -> float:
    """Fit ``kind`` on one window and return the unclamped forecast one step past it.

    ``noise`` (already scaled) is applied under the usual trigger rule.
    Raises on a failed fit; :func:`rolling_forecast` turns that into a
    persistence fallback.
    """
    win = window
    if noise is not None:
        src = window if isinstance(window, Series) else Series(window)
        win = perturb(src.values, noise, src.missing)
    fit = _FITTERS[ModelKind(kind)](win)
    w = fit.window_len
    pred = fit.forecast(w)
    if Correction(correction) is Correction.FOURIER:
        try:
            resid_model = fit_fourier(grey_residuals(fit, win))
        except CorrectionDisabled:
            pass
        else:
            pred += predict_residual(resid_model, w + 1)
    return float(pred)


def _noisy_windows(src: Series, window: int, variance: float, seed: int) -> np.ndarray:
    X = sliding_window_view(src.values, window)[:-1].copy()
    if variance == 0:
        return X
    trigger = (X == 0).any(axis=1) | (X[:, 1:] == X[:, :-1]).any(axis=1)
    if src.missing is not None:
        trigger |= sliding_window_view(src.missing, window)[:-1].any(axis=1)
    noise = np.sqrt(variance) * noise_stream(seed, src.label).standard_normal(X.shape)
    X[trigger] = np.maximum(X[trigger] + noise[trigger], 0.0)
    return X


def rolling_forecast(
    series: SeriesLike,
    kind: ModelKind | str = ModelKind.GM11,
    window: int = MIN_WINDOW,
    correction: Correction | str = Correction.NONE,
    *,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    seed: int = 0,
) -> RollingForecast:
    """Refit on each window of ``window`` past observations and predict the next one.

    Target index ``t`` (0-based) uses only ``series[t - window:t]``. Windows
    that trigger the noise rule are perturbed with noise that depends only
    on ``(seed, label, window start)`` (see :func:`noise_stream`). Failed fits fall back to persistence and are
    flagged.
    """
    kind = ModelKind(kind)
    correction = Correction(correction)
    src = series if isinstance(series, Series) else Series(np.asarray(series, dtype=np.float64))
    n = len(src)
    if window < MIN_WINDOW:
        raise ValueError(f"window must be >= {MIN_WINDOW}, got {window}")
    if n <= window:
        raise ValueError(f"series of length {n} too short for window {window}")
    if noise_variance < 0:
        raise ValueError("noise variance must be nonnegative")

    X = _noisy_windows(src, window, noise_variance, seed)
    a, b, ok = fit_batch(X, kind)
    restored = _RESTORED[kind]
    x1 = X[:, :1]
    with np.errstate(all="ignore"):
        raw = restored(a, b, x1[:, 0], float(window))
        if correction is Correction.FOURIER and window - 1 >= MIN_RESIDUALS:
            fitted = restored(a[:, None], b[:, None], x1, np.arange(1.0, window))
            good = ok & np.isfinite(fitted).all(axis=1)
            corr = np.full(a.size, np.nan)
            if good.any():
                corr[good] = fourier_correction_batch(X[good, 1:] - fitted[good], window + 1.0)
            raw = raw + corr
            ok = good
    fallback = ~(ok & np.isfinite(raw))
    raw = np.where(fallback, src.values[window - 1 : n - 1], raw)
    return RollingForecast(
        predictions=np.maximum(raw, 0.0),
        targets=np.arange(window, n),
        raw=raw,
        fallback=fallback,
        window=window,
        model_kind=kind,
        correction=correction,
    )
