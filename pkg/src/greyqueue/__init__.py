"""Grey-system models for short-term queue length forecasting."""

from greyqueue.errors import (
    DataError,
    GreyQueueError,
    NumericalDomainError,
    SingularFitError,
    WindowTooSmallError,
)
from greyqueue.grey import (
    AccumulatedSeries,
    GreyModelFit,
    MeanSeries,
    ModelKind,
    Series,
    accumulate,
    fit_gm11,
    fit_gvm,
    forecast_gm11,
    forecast_gvm,
    inject_noise,
    mean_sequence,
    restore,
)
from greyqueue.fourier import (
    FourierResidualModel,
    corrected_forecast,
    fit_fourier,
    predict_residual,
)
from greyqueue.rolling import Correction, RollingForecast, rolling_forecast

__all__ = [
    "AccumulatedSeries",
    "Correction",
    "DataError",
    "FourierResidualModel",
    "GreyModelFit",
    "GreyQueueError",
    "MeanSeries",
    "ModelKind",
    "NumericalDomainError",
    "RollingForecast",
    "Series",
    "SingularFitError",
    "WindowTooSmallError",
    "accumulate",
    "corrected_forecast",
    "fit_fourier",
    "fit_gm11",
    "fit_gvm",
    "forecast_gm11",
    "forecast_gvm",
    "inject_noise",
    "mean_sequence",
    "predict_residual",
    "restore",
    "rolling_forecast",
]

__version__ = "0.1.0"
