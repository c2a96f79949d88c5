"""Benchmark harness: split, fit, predict and score every (counter, kind, model) cell."""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from greyqueue.baselines import (
    DEFAULT_AR_ORDER,
    DEFAULT_GAMMAS,
    ArModel,
    LstarModel,
    fit_ar,
    fit_lstar,
    model_selection_aic,
    one_step_predictions,
)
from greyqueue.data import (
    CounterDataset,
    SignalScenario,
    SplitSpec,
    format_value,
    generate_queue_scenario,
    load_csv,
    split,
)
from greyqueue.errors import DataError, GreyQueueError
from greyqueue.grey import DEFAULT_NOISE_VARIANCE, MIN_WINDOW, ModelKind, Series
from greyqueue.metrics import ErrorSummary, summarize
from greyqueue.rolling import Correction, rolling_forecast

log = logging.getLogger(__name__)

REPORT_VERSION = 1


class ModelName(str, enum.Enum):
    GM = "GM"
    EGM = "EGM"
    GVM = "GVM"
    EGVM = "EGVM"
    LINEAR = "LINEAR"
    LSTAR = "LSTAR"


GREY_MODELS = {
    ModelName.GM: (ModelKind.GM11, Correction.NONE),
    ModelName.EGM: (ModelKind.GM11, Correction.FOURIER),
    ModelName.GVM: (ModelKind.GVM, Correction.NONE),
    ModelName.EGVM: (ModelKind.GVM, Correction.FOURIER),
}
DEFAULT_MODELS = tuple(m.value for m in ModelName)


class ConfigError(GreyQueueError, ValueError):
    pass


@dataclass(frozen=True)
class LstarSettings:
    orders: tuple[tuple[int, int], ...] = ((2, 2),)
    delta: int = 1
    gammas: tuple[float, ...] = DEFAULT_GAMMAS


@dataclass(frozen=True)
class BenchConfig:
    models: tuple[str, ...] = DEFAULT_MODELS
    external: Mapping[str, str] = field(default_factory=dict)
    window: int = MIN_WINDOW
    train_fraction: float = 0.67
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    seed: int = 0
    ar_orders: tuple[int, ...] = (DEFAULT_AR_ORDER,)
    lstar: LstarSettings = LstarSettings()
    input: str | None = None
    regime_tags: str | None = None
    scenarios: tuple[SignalScenario, ...] = ()
    out: str = "results"
    jobs: int = 1
    timing_repeats: int = 3

    def __post_init__(self):
        names = [m.upper() for m in self.models]
        for m in names:
            if m not in DEFAULT_MODELS:
                raise ConfigError(f"unknown model {m!r}; choose from {', '.join(DEFAULT_MODELS)}")
        object.__setattr__(self, "models", tuple(names))
        clash = set(self.external) & set(DEFAULT_MODELS)
        if clash:
            raise ConfigError(f"external model names clash with built-ins: {sorted(clash)}")
        if not names and not self.external:
            raise ConfigError("configure at least one model")
        if self.window < MIN_WINDOW:
            raise ConfigError(f"window must be >= {MIN_WINDOW}")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be >= 0")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.timing_repeats < 1:
            raise ConfigError("timing_repeats must be >= 1")

    @property
    def model_names(self) -> tuple[str, ...]:
        return self.models + tuple(sorted(self.external))


def _expand_scenarios(items: Iterable[Mapping[str, Any]], seed: int) -> tuple[SignalScenario, ...]:
    """Scenario entries accept ``load`` (demand / capacity) and ``repeat`` (seeded copies)."""
    out = []
    fields = set(SignalScenario.__dataclass_fields__)
    for i, raw in enumerate(items):
        item = dict(raw)
        repeat = int(item.pop("repeat", 1))
        load = item.pop("load", None)
        unknown = set(item) - fields
        if unknown:
            raise ConfigError(f"scenario {i}: unknown keys {sorted(unknown)}")
        item.setdefault("counter_id", f"S{i + 1}")
        item.setdefault("seed", seed + 1000 * i)
        try:
            base = SignalScenario(**item)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario {i}: {exc}") from None
        if load is not None:
            base = replace(base, arrival_rate=float(load) * base.capacity)
        if repeat == 1:
            out.append(base)
        else:
            out.extend(
                replace(base, seed=base.seed + r, counter_id=f"{base.counter_id}_{r + 1:02d}") for r in range(repeat)
            )
    ids = [s.counter_id for s in out]
    if len(set(ids)) != len(ids):
        raise ConfigError("scenario counter_id values must be unique")
    return tuple(out)


def config_from_mapping(raw: Mapping[str, Any], base_dir: Path | None = None) -> BenchConfig:
    raw = dict(raw or {})
    known = set(BenchConfig.__dataclass_fields__) | {"ar_order"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    def resolve(p):
        if p is None:
            return None
        path = Path(p)
        return str(path if path.is_absolute() or base_dir is None else base_dir / path)

    seed = int(raw.get("seed", 0))
    lstar_raw = dict(raw.get("lstar") or {})
    lstar = LstarSettings(
        orders=tuple(tuple(int(v) for v in o) for o in lstar_raw.get("orders", LstarSettings.orders)),
        delta=int(lstar_raw.get("delta", 1)),
        gammas=tuple(float(g) for g in lstar_raw.get("gammas", DEFAULT_GAMMAS)),
    )
    if "ar_order" in raw:
        ar_orders = (int(raw["ar_order"]),)
    else:
        ar_orders = tuple(int(m) for m in raw.get("ar_orders", (DEFAULT_AR_ORDER,)))
    models = raw.get("models", DEFAULT_MODELS)
    if isinstance(models, str):
        models = [m.strip() for m in models.split(",") if m.strip()]
    return BenchConfig(
        models=tuple(models),
        external={str(k): resolve(v) for k, v in (raw.get("external") or {}).items()},
        window=int(raw.get("window", MIN_WINDOW)),
        train_fraction=float(raw.get("train_fraction", 0.67)),
        noise_variance=float(raw.get("noise_variance", DEFAULT_NOISE_VARIANCE)),
        seed=seed,
        ar_orders=ar_orders,
        lstar=lstar,
        input=resolve(raw.get("input")),
        regime_tags=resolve(raw.get("regime_tags")),
        scenarios=_expand_scenarios(raw.get("scenarios") or (), seed),
        out=str(raw.get("out", "results")),
        jobs=int(raw.get("jobs", 1)),
        timing_repeats=int(raw.get("timing_repeats", 3)),
    )


def load_config(path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> BenchConfig:
    """Read a YAML config (or start empty) and apply non-None ``overrides``."""
    raw: dict = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        base_dir = path.parent
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if loaded is not None and not isinstance(loaded, Mapping):
            raise ConfigError(f"{path}: top level must be a mapping")
        raw = dict(loaded or {})
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(raw, base_dir=base_dir)


# ------------------------------------------------------------------ data


def _read_regime_tags(path: str) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"counter_id", "regime"} <= set(reader.fieldnames):
            raise DataError(f"{path}: regime tag file needs counter_id,regime columns")
        return {row["counter_id"]: row["regime"] for row in reader}


def load_datasets(config: BenchConfig) -> list[CounterDataset]:
    """Datasets from the configured CSV, or generated from the scenario list."""
    if config.input:
        datasets = load_csv(config.input)
        if config.regime_tags:
            tags = _read_regime_tags(config.regime_tags)
            datasets = [
                replace(d, saturated={"saturated": True, "undersaturated": False}.get(tags.get(d.counter_id, "")))
                for d in datasets
            ]
    elif config.scenarios:
        datasets = [ds for sc in config.scenarios for ds in generate_queue_scenario(sc)]
    else:
        raise ConfigError("config needs either 'input' or 'scenarios'")
    return sorted(datasets, key=lambda d: d.key)


def regime_label(ds: CounterDataset) -> str:
    if ds.saturated is None:
        return "unknown"
    return "saturated" if ds.saturated else "undersaturated"


# ------------------------------------------------------------------ cells


@dataclass(frozen=True)
class ModelRun:
    """Aligned predictions of one model on one test series."""

    times: np.ndarray
    truth: np.ndarray
    predictions: np.ndarray
    raw: np.ndarray
    fallback_count: int = 0
    fit_time_s: float | None = 0.0
    predict_time_s: float | None = 0.0
    params: dict | None = None


@dataclass(frozen=True)
class CellResult:
    counter_id: str
    kind: str
    lanes: int
    intersection: int
    regime: str
    model: str
    status: str
    reason: str = ""
    summary: ErrorSummary | None = None
    fallback_count: int = 0
    n_steps: int = 0
    fit_time_s: float | None = None
    predict_time_s: float | None = None

    @property
    def sort_key(self):
        return (self.counter_id, self.kind, self.model)

    def report_row(self) -> dict:
        s = self.summary.as_dict() if self.summary else {k: None for k in ("rmse", "mae", "mape", "mape_coverage", "n")}
        return {
            "counter_id": self.counter_id,
            "kind": self.kind,
            "lanes": self.lanes,
            "intersection": self.intersection,
            "regime": self.regime,
            "model": self.model,
            "status": self.status,
            "reason": self.reason,
            **s,
            "fallback_count": self.fallback_count,
        }

    def timing_row(self) -> dict:
        per_step = None
        if self.predict_time_s is not None and self.n_steps:
            per_step = self.predict_time_s / self.n_steps
        return {
            "counter_id": self.counter_id,
            "kind": self.kind,
            "model": self.model,
            "fit_time_s": self.fit_time_s,
            "predict_time_s": self.predict_time_s,
            "predict_time_per_step_s": per_step,
            "n_steps": self.n_steps,
        }


def fit_baseline(name: str, train: Series, config: BenchConfig) -> ArModel | LstarModel:
    """Fit LINEAR or LSTAR on the training split, choosing orders by AIC."""
    if name == ModelName.LINEAR.value:
        cands = [fit_ar(train, m) for m in config.ar_orders]
    else:
        cands = []
        for L, H in config.lstar.orders:
            cands.append(fit_lstar(train, L, H, config.lstar.delta, gammas=config.lstar.gammas))
    return cands[0] if len(cands) == 1 else model_selection_aic(cands, train)


def _timed(fn, repeats: int):
    """Result of ``fn()`` and its fastest wall-clock time over ``repeats`` calls."""
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return result, best


def run_model(name: str, ds: CounterDataset, config: BenchConfig) -> ModelRun:
    """Fit and predict one built-in model on the test part of ``ds``.

    Grey models have no training phase: they refit on every rolling window
    of the test split, so their fit time is reported as zero.
    """
    train, test = split(ds, SplitSpec(config.train_fraction))
    mname = ModelName(name)
    reps = config.timing_repeats
    if mname in GREY_MODELS:
        kind, corr = GREY_MODELS[mname]
        rf, elapsed = _timed(
            lambda: rolling_forecast(
                test, kind, config.window, corr, noise_variance=config.noise_variance, seed=config.seed
            ),
            reps,
        )
        return ModelRun(
            times=test.times[rf.targets],
            truth=test.values[rf.targets],
            predictions=rf.predictions,
            raw=rf.raw,
            fallback_count=rf.fallback_count,
            fit_time_s=0.0,
            predict_time_s=elapsed,
        )
    model, fit_time = _timed(lambda: fit_baseline(name, train, config), reps)
    (targets, raw), predict_time = _timed(lambda: one_step_predictions(model, test), reps)
    return ModelRun(
        times=test.times[targets],
        truth=test.values[targets],
        predictions=np.maximum(raw, 0.0),
        raw=raw,
        fit_time_s=fit_time,
        predict_time_s=predict_time,
        params=model.params(),
    )


def _read_external(path: str) -> dict[tuple[str, str], dict[int, float]]:
    """External predictions: ``time_s,counter_id,kind,prediction`` rows."""
    out: dict[tuple[str, str], dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = {"time_s", "counter_id", "kind", "prediction"}
        if not reader.fieldnames or not need <= set(reader.fieldnames):
            raise DataError(f"{path}: external predictions need columns {sorted(need)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                t, v = int(row["time_s"]), float(row["prediction"])
            except ValueError:
                raise DataError(f"{path} line {lineno}: malformed time_s/prediction") from None
            out.setdefault((row["counter_id"], row["kind"]), {})[t] = v
    return out


def run_external(preds: Mapping[int, float], ds: CounterDataset, config: BenchConfig) -> ModelRun:
    _, test = split(ds, SplitSpec(config.train_fraction))
    times = test.times
    keep = np.array([t in preds for t in times])
    if not keep.any():
        raise DataError("no external predictions fall in the test period")
    p = np.array([preds[int(t)] for t in times[keep]])
    return ModelRun(times[keep], test.values[keep], p, p, fit_time_s=None, predict_time_s=None)


def _cell(args) -> CellResult:
    name, ds, config, external = args
    base = dict(
        counter_id=ds.counter_id,
        kind=ds.kind.value,
        lanes=ds.lanes,
        intersection=ds.intersection,
        regime=regime_label(ds),
        model=name,
    )
    try:
        if external is not None:
            run = run_external(external, ds, config)
        else:
            run = run_model(name, ds, config)
        summary = summarize(run.predictions, run.truth)
    except (GreyQueueError, ValueError, ArithmeticError) as exc:
        log.warning("%s %s/%s failed: %s", name, ds.counter_id, ds.kind.value, exc)
        return CellResult(**base, status="failed", reason=f"{type(exc).__name__}: {exc}")
    return CellResult(
        **base,
        status="ok",
        summary=summary,
        fallback_count=run.fallback_count,
        n_steps=run.predictions.size,
        fit_time_s=run.fit_time_s,
        predict_time_s=run.predict_time_s,
    )


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[CellResult, ...]
    config: BenchConfig

    @property
    def failed(self) -> list[CellResult]:
        return [r for r in self.rows if r.status != "ok"]

    def get(self, counter_id: str, kind: str, model: str) -> CellResult:
        for r in self.rows:
            if (r.counter_id, r.kind, r.model) == (counter_id, kind, model):
                return r
        raise KeyError((counter_id, kind, model))

    def values(self, model: str, metric: str = "rmse", **where) -> np.ndarray:
        """Metric values of ``model`` over successful rows matching ``where``."""
        vals = []
        for r in self.rows:
            if r.model != model or r.status != "ok":
                continue
            if any(getattr(r, k) != v for k, v in where.items()):
                continue
            vals.append(getattr(r.summary, metric))
        return np.array(vals, dtype=float)


def run_bench(config: BenchConfig, datasets: Sequence[CounterDataset] | None = None) -> BenchmarkReport:
    """Evaluate every configured model on every dataset."""
    if datasets is None:
        datasets = load_datasets(config)
    externals = {name: _read_external(path) for name, path in config.external.items()}
    tasks = []
    for ds in datasets:
        for name in config.models:
            tasks.append((name, ds, config, None))
        for name, table in sorted(externals.items()):
            tasks.append((name, ds, config, table.get(ds.key, {})))
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(_cell, tasks))
    else:
        rows = [_cell(t) for t in tasks]
    return BenchmarkReport(tuple(sorted(rows, key=lambda r: r.sort_key)), config)


# ---------------------------------------------------------------- output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return format_value(v)
    return str(v)


def _write_table(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(rows[0].keys())
        for r in rows:
            w.writerow(_fmt(v) for v in r.values())


def box_stats(values: np.ndarray) -> dict:
    if values.size == 0:
        return {k: None for k in ("count", "min", "q1", "median", "q3", "max", "mean")}
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {
        "count": int(values.size),
        "min": float(values.min()),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(values.max()),
        "mean": float(values.mean()),
    }


def summary_rows(report: BenchmarkReport) -> list[dict]:
    """Per-model box-plot statistics of per-series errors, split by queue kind."""
    out = []
    kinds = sorted({r.kind for r in report.rows})
    for model in report.config.model_names:
        for kind in kinds:
            for metric in ("rmse", "mae"):
                out.append({"model": model, "kind": kind, "metric": metric, **box_stats(report.values(model, metric, kind=kind))})
    return out


def group_rows(report: BenchmarkReport) -> list[dict]:
    """Errors grouped by lane class (single/multi) and saturation regime."""
    out = []
    groups = sorted({("single" if r.lanes == 1 else "multi", r.regime, r.kind) for r in report.rows})
    for model in report.config.model_names:
        for lane_class, regime, kind in groups:
            sel = [
                r
                for r in report.rows
                if r.model == model
                and r.status == "ok"
                and r.kind == kind
                and r.regime == regime
                and (r.lanes == 1) == (lane_class == "single")
            ]
            rm = np.array([r.summary.rmse for r in sel])
            ma = np.array([r.summary.mae for r in sel])
            out.append(
                {
                    "model": model,
                    "lane_class": lane_class,
                    "regime": regime,
                    "kind": kind,
                    "count": len(sel),
                    "rmse_median": float(np.median(rm)) if sel else None,
                    "rmse_mean": float(rm.mean()) if sel else None,
                    "mae_median": float(np.median(ma)) if sel else None,
                    "mae_mean": float(ma.mean()) if sel else None,
                }
            )
    return out


def report_document(report: BenchmarkReport) -> dict:
    cfg = report.config
    return {
        "version": REPORT_VERSION,
        "config": {
            "models": list(cfg.model_names),
            "window": cfg.window,
            "train_fraction": cfg.train_fraction,
            "noise_variance": cfg.noise_variance,
            "seed": cfg.seed,
            "ar_orders": list(cfg.ar_orders),
            "lstar": {"orders": [list(o) for o in cfg.lstar.orders], "delta": cfg.lstar.delta, "gammas": list(cfg.lstar.gammas)},
        },
        "rows": [r.report_row() for r in report.rows],
        "summary": summary_rows(report),
        "groups": group_rows(report),
    }


def write_report(report: BenchmarkReport, out_dir: str | Path) -> dict[str, Path]:
    """Write the deterministic report files plus the (volatile) timing table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out / "report.json",
        "csv": out / "report.csv",
        "summary": out / "summary.csv",
        "groups": out / "groups.csv",
        "timings": out / "timings.csv",
    }
    doc = report_document(report)
    paths["json"].write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    _write_table(paths["csv"], doc["rows"])
    _write_table(paths["summary"], doc["summary"])
    _write_table(paths["groups"], doc["groups"])
    _write_table(paths["timings"], timing_rows(report))
    return paths


def timing_rows(report: BenchmarkReport) -> list[dict]:
    return [r.timing_row() for r in report.rows]


def mean_timings(report: BenchmarkReport) -> dict[str, dict[str, float | None]]:
    """Average train time and per-step test time per model."""
    out = {}
    for model in report.config.model_names:
        rows = [r for r in report.rows if r.model == model and r.status == "ok" and r.fit_time_s is not None]
        if not rows:
            out[model] = {"fit_time_s": None, "predict_time_per_step_s": None}
            continue
        out[model] = {
            "fit_time_s": float(np.mean([r.fit_time_s for r in rows])),
            "predict_time_per_step_s": float(np.mean([r.predict_time_s / max(r.n_steps, 1) for r in rows])),
        }
    return out
