"""Accumulated generating operation, GM(1,1) and the Grey Verhulst model.

Indices follow the usual Grey-systems convention: a window of ``n``
observations is ``x0(1), ..., x0(n)`` and the restored forecast
``x0_hat(k + 1)`` for ``k = n`` is the one-step-ahead prediction.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from greyqueue.errors import (
    NumericalDomainError,
    SingularFitError,
    WindowTooSmallError,
)
from greyqueue.linalg import lstsq_qr_batch

MIN_WINDOW = 4
# |a| below this makes the GM(1,1) response b/a terms meaningless
MIN_DEVELOPMENT_COEF = 1e-12
# relative size of a logistic denominator treated as zero
DENOM_RTOL = 1e-12
# variance of the noise added to degenerate windows
DEFAULT_NOISE_VARIANCE = 1e-4


class ModelKind(str, enum.Enum):
    GM11 = "GM11"
    GVM = "GVM"


@dataclass(frozen=True)
class Series:
    """Ordered observations (queue length in meters) on a regular time grid.

    ``missing`` flags positions that were absent in the source data and have
    been imputed; it only influences the noise-injection trigger.
    """

    values: np.ndarray
    start_time: int = 0
    period: int = 1
    label: str = ""
    missing: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if vals.size == 0:
            raise ValueError("series must contain at least one value")
        if not np.all(np.isfinite(vals)):
            raise ValueError("series values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.missing is not None:
            miss = np.array(self.missing, dtype=bool).reshape(-1)
            if miss.shape != vals.shape:
                raise ValueError("missing mask length differs from values")
            miss.setflags(write=False)
            object.__setattr__(self, "missing", miss)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and (self.start_time, self.period, self.label)
            == (other.start_time, other.period, other.label)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.period * np.arange(len(self))

    def slice(self, start: int, stop: int) -> "Series":
        miss = None if self.missing is None else self.missing[start:stop]
        return Series(
            self.values[start:stop],
            start_time=self.start_time + start * self.period,
            period=self.period,
            label=self.label,
            missing=miss,
        )


SeriesLike = Union[Series, Sequence[float], np.ndarray]


def as_array(x: SeriesLike) -> np.ndarray:
    if isinstance(x, Series):
        return x.values
    return np.asarray(x, dtype=np.float64).reshape(-1)


@dataclass(frozen=True)
class AccumulatedSeries:
    values: np.ndarray
    source: Series


@dataclass(frozen=True)
class MeanSeries:
    values: np.ndarray


def accumulate(series: SeriesLike) -> AccumulatedSeries:
    """Prefix sums ``x1(k) = x0(1) + ... + x0(k)``."""
    src = series if isinstance(series, Series) else Series(as_array(series))
    return AccumulatedSeries(np.cumsum(src.values), src)


def restore(acc: AccumulatedSeries | np.ndarray) -> np.ndarray:
    """Inverse accumulation (first differences, keeping the first value)."""
    vals = acc.values if isinstance(acc, AccumulatedSeries) else np.asarray(acc, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("cannot restore an empty sequence")
    return np.concatenate([vals[:1], np.diff(vals)])


def mean_sequence(acc: AccumulatedSeries | np.ndarray) -> MeanSeries:
    """Adjacent-pair means ``z1(k) = (x1(k-1) + x1(k)) / 2`` for k = 2..n."""
    vals = acc.values if isinstance(acc, AccumulatedSeries) else np.asarray(acc, dtype=np.float64)
    if vals.size < 2:
        raise ValueError("mean sequence needs at least two accumulated values")
    return MeanSeries(0.5 * (vals[:-1] + vals[1:]))


def needs_noise(values: np.ndarray, missing: np.ndarray | None = None) -> bool:
    """True when a window holds a zero, a missing value, or a repeated value."""
    if missing is not None and np.any(missing):
        return True
    if np.any(values == 0):
        return True
    return bool(np.any(values[1:] == values[:-1]))


def noise_stream(seed: int, label: str = "") -> np.random.Generator:
    """Standard-normal stream for one series; row ``s`` of an ``(N, w)`` draw
    perturbs the window starting at ``s``.

    A prefix of the stream does not depend on how many rows are drawn, so
    the noise of any window is a fixed function of ``(seed, label, start)``.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode())]))


def window_noise(seed: int, label: str, start: int, window: int) -> np.ndarray:
    """Standard-normal draws used for the window starting at ``start``."""
    return noise_stream(seed, label).standard_normal((start + 1, window))[start]


def perturb(values: np.ndarray, noise: np.ndarray, missing: np.ndarray | None = None) -> np.ndarray:
    """Add ``noise`` when the trigger rule fires, clamping at zero."""
    if not needs_noise(values, missing):
        return values
    return np.maximum(values + noise, 0.0)


def inject_noise(
    series: SeriesLike,
    variance: float = DEFAULT_NOISE_VARIANCE,
    seed: int | np.random.Generator = 0,
) -> Series:
    """Perturb a degenerate window with zero-mean Gaussian noise.

    Noise of the given ``variance`` is added to every element, but only
    when the window contains a zero, a missing value, or two identical
    consecutive observations; otherwise the input is returned unchanged.
    Results are clamped at zero.
    """
    if variance < 0:
        raise ValueError("noise variance must be nonnegative")
    src = series if isinstance(series, Series) else Series(as_array(series))
    if variance == 0 or not needs_noise(src.values, src.missing):
        return src
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = np.sqrt(variance) * rng.standard_normal(len(src))
    return Series(
        perturb(src.values, noise, src.missing),
        start_time=src.start_time,
        period=src.period,
        label=src.label,
        missing=src.missing,
    )


@dataclass(frozen=True)
class GreyModelFit:
    kind: ModelKind
    a: float
    b: float
    x0_first: float
    window_len: int

    def forecast(self, k):
        """Restored value ``x0_hat(k + 1)``; ``k = window_len`` is one step ahead."""
        if self.kind is ModelKind.GM11:
            return forecast_gm11(self, k)
        return forecast_gvm(self, k)

    def fitted(self) -> np.ndarray:
        """In-sample restored values for k = 2..n."""
        return self.forecast(np.arange(1, self.window_len))


def _designs(X0: np.ndarray, kind: ModelKind) -> tuple[np.ndarray, np.ndarray]:
    """Stacked design matrices ``B`` and targets ``Y`` for windows in the rows of ``X0``."""
    x1 = np.cumsum(X0, axis=1)
    z = 0.5 * (x1[:, :-1] + x1[:, 1:])
    second = np.ones_like(z) if kind is ModelKind.GM11 else z * z
    return np.stack([-z, second], axis=2), X0[:, 1:]


def fit_batch(X0: np.ndarray, kind: ModelKind) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit every row of ``X0`` as a separate window.

    Returns ``(a, b, ok)``. Rows fail when the design is rank deficient, the
    window is constant, or (GM11) ``|a|`` is negligible.
    """
    X0 = np.asarray(X0, dtype=np.float64)
    if X0.ndim != 2:
        raise ValueError("expected a 2-D stack of windows")
    if X0.shape[1] < MIN_WINDOW:
        raise WindowTooSmallError(f"window has {X0.shape[1]} observations, need at least {MIN_WINDOW}")
    B, Y = _designs(X0, kind)
    coef, ok = lstsq_qr_batch(B, Y)
    a, b = coef[:, 0], coef[:, 1]
    ok &= np.ptp(X0, axis=1) > 0
    ok &= np.isfinite(a) & np.isfinite(b)
    if kind is ModelKind.GM11:
        ok &= np.abs(np.nan_to_num(a)) >= MIN_DEVELOPMENT_COEF
    return a, b, ok


def _fit(window: SeriesLike, kind: ModelKind) -> GreyModelFit:
    x0 = as_array(window)
    a, b, ok = fit_batch(x0[None, :], kind)
    if not ok[0]:
        if np.ptp(x0) == 0:
            raise SingularFitError("constant window carries no dynamics; inject noise first")
        raise SingularFitError(f"{kind.value} fit failed: rank-deficient design or negligible development coefficient")
    return GreyModelFit(kind, float(a[0]), float(b[0]), float(x0[0]), int(x0.size))


def fit_gm11(window: SeriesLike) -> GreyModelFit:
    """Least-squares GM(1,1) fit of ``x0(k) + a z1(k) = b`` over k = 2..n."""
    return _fit(window, ModelKind.GM11)


def fit_gvm(window: SeriesLike) -> GreyModelFit:
    """Least-squares Grey Verhulst fit of ``x0(k) + a z1(k) = b z1(k)^2``."""
    return _fit(window, ModelKind.GVM)


def _check_k(k) -> np.ndarray:
    karr = np.asarray(k, dtype=np.float64)
    if np.any(karr < 1):
        raise ValueError("forecast index k must be >= 1")
    return karr


def _scalar_or_array(x: np.ndarray, like):
    return float(x) if np.ndim(like) == 0 else x


def gm11_restored(a, b, x1, k):
    """Vectorised ``(1 - e^a) (x1 - b/a) e^{-a k}``."""
    return (1.0 - np.exp(a)) * (x1 - b / a) * np.exp(-a * k)


def verhulst_accumulated(a, b, x1, j):
    """Vectorised ``a x1 / (b x1 + (a - b x1) e^{a(j-1)})``; NaN where the denominator vanishes."""
    growth = np.exp(a * (j - 1.0))
    denom = b * x1 + (a - b * x1) * growth
    scale = np.abs(b * x1) + np.abs((a - b * x1) * growth)
    bad = ~np.isfinite(denom) | (np.abs(denom) <= DENOM_RTOL * scale)
    return np.where(bad, np.nan, a * x1 / np.where(bad, 1.0, denom))


def gvm_restored(a, b, x1, k):
    return verhulst_accumulated(a, b, x1, k + 1.0) - verhulst_accumulated(a, b, x1, k)


def forecast_gm11(fit: GreyModelFit, k):
    """``x0_hat(k+1) = (1 - e^a) (x0(1) - b/a) e^{-a k}``."""
    if fit.kind is not ModelKind.GM11:
        raise ValueError(f"expected a GM11 fit, got {fit.kind.value}")
    karr = _check_k(k)
    if fit.a == 0:
        raise NumericalDomainError("GM(1,1) response undefined for a == 0")
    return _scalar_or_array(gm11_restored(fit.a, fit.b, fit.x0_first, karr), k)


def verhulst_response(fit: GreyModelFit, j) -> np.ndarray:
    """Accumulated logistic response ``x1_hat(j)`` of a GVM fit."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = verhulst_accumulated(fit.a, fit.b, fit.x0_first, np.asarray(j, dtype=np.float64))
    if np.any(np.isnan(out)):
        raise NumericalDomainError("logistic response denominator vanishes")
    return out


def forecast_gvm(fit: GreyModelFit, k):
    """Restored Verhulst value ``x0_hat(k+1) = x1_hat(k+1) - x1_hat(k)``."""
    if fit.kind is not ModelKind.GVM:
        raise ValueError(f"expected a GVM fit, got {fit.kind.value}")
    karr = _check_k(k)
    out = verhulst_response(fit, karr + 1.0) - verhulst_response(fit, karr)
    return _scalar_or_array(out, k)


def forecast_gvm_product_form(fit: GreyModelFit, k):
    """The product-of-fractions restored form often quoted for GVM.

    Algebraically it equals ``x1_hat(k) - x1_hat(k-1)``, i.e. the
    differenced response one index earlier than :func:`forecast_gvm`.
    Kept for cross-checking only.
    """
    a, b, x1 = fit.a, fit.b, fit.x0_first
    karr = np.asarray(k, dtype=np.float64)
    c = a - b * x1
    first = a * x1 * c / (b * x1 + c * np.exp(a * (karr - 1.0)))
    second = (1.0 - np.exp(a)) * np.exp(a * (karr - 2.0)) / (b * x1 + c * np.exp(a * (karr - 2.0)))
    return _scalar_or_array(first * second, k)
