"""Fourier-series correction of Grey-model residuals (EGM / EGVM)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from greyqueue.errors import GreyQueueError
from greyqueue.grey import GreyModelFit, SeriesLike, as_array
from greyqueue.linalg import solve_multi

# fewer residuals than this and no harmonic can be estimated alongside a0
MIN_RESIDUALS = 3


class CorrectionDisabled(GreyQueueError):
    """Too few residuals for a Fourier correction; use the base model."""


def harmonic_count(n_residuals: int) -> int:
    """``z = floor(T / 2) - 1`` with ``T = n - 1`` residuals, at least 1."""
    return max(n_residuals // 2 - 1, 1)


@dataclass(frozen=True)
class FourierResidualModel:
    coefficients: np.ndarray  # (a0, a1, b1, ..., az, bz)
    period: float
    harmonics: int

    def __post_init__(self):
        coefs = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if coefs.size != 2 * self.harmonics + 1:
            raise ValueError(f"expected {2 * self.harmonics + 1} coefficients, got {coefs.size}")
        coefs.setflags(write=False)
        object.__setattr__(self, "coefficients", coefs)


def design_matrix(k, period: float, harmonics: int) -> np.ndarray:
    """Rows ``(1/2, cos(2 pi k/T), sin(2 pi k/T), ..., cos(2 pi z k/T), sin(2 pi z k/T))``."""
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    omega = 2.0 * np.pi * np.arange(1, harmonics + 1) / period
    phase = np.outer(k, omega)
    P = np.empty((k.size, 2 * harmonics + 1))
    P[:, 0] = 0.5
    P[:, 1::2] = np.cos(phase)
    P[:, 2::2] = np.sin(phase)
    return P


def fit_fourier(residuals: SeriesLike) -> FourierResidualModel:
    """Least-squares Fourier fit to residuals indexed k = 2..n.

    Raises :class:`CorrectionDisabled` when fewer than three residuals are
    available. A numerically singular design falls back to the
    minimum-norm solution.
    """
    eps = as_array(residuals)
    if eps.size < MIN_RESIDUALS:
        raise CorrectionDisabled(f"{eps.size} residuals, need at least {MIN_RESIDUALS}")
    period = float(eps.size)
    z = harmonic_count(eps.size)
    P = design_matrix(np.arange(2, eps.size + 2), period, z)
    coefs = solve_multi(P, eps[:, None])[:, 0]
    return FourierResidualModel(coefs, period, z)


def predict_residual(model: FourierResidualModel, k):
    """Evaluate the truncated Fourier sum at index ``k`` (scalar or array)."""
    kk = np.asarray(k, dtype=np.float64)
    if np.any(kk < 2):
        raise ValueError("residual index k must be >= 2")
    out = design_matrix(kk, model.period, model.harmonics) @ model.coefficients
    return float(out[0]) if kk.ndim == 0 else out


def fourier_correction_batch(residuals: np.ndarray, k: float) -> np.ndarray:
    """Fitted Fourier sums at index ``k`` for each row of residuals (k = 2..n)."""
    R = np.asarray(residuals, dtype=np.float64)
    m = R.shape[1]
    if m < MIN_RESIDUALS:
        raise CorrectionDisabled(f"{m} residuals, need at least {MIN_RESIDUALS}")
    z = harmonic_count(m)
    P = design_matrix(np.arange(2, m + 2), float(m), z)
    coefs = solve_multi(P, R.T)
    return design_matrix([k], float(m), z)[0] @ coefs


def corrected_forecast(base, model: FourierResidualModel, k):
    return base + predict_residual(model, k)


def grey_residuals(fit: GreyModelFit, window: SeriesLike) -> np.ndarray:
    """In-sample errors ``x0(k) - x0_hat(k)`` for k = 2..n."""
    x0 = as_array(window)
    if x0.size != fit.window_len:
        raise ValueError("window length differs from the fit")
    return x0[1:] - fit.fitted()
