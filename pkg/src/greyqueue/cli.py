"""Command-line entry point: ``greyqueue synth|bench|fit|forecast``."""

from __future__ import annotations

import csv
import logging
import sys
from pathlib import Path

import click

from greyqueue.baselines import ArModel, LstarModel
from greyqueue.bench import (
    GREY_MODELS,
    ModelName,
    fit_baseline,
    load_config,
    load_datasets,
    mean_timings,
    run_bench,
    run_model,
    write_report,
)
from greyqueue.data import SplitSpec, format_value, generate_queue_scenario, split, write_csv
from greyqueue.errors import GreyQueueError

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(EXIT_CONFIG)


def _config(ctx_obj: dict, **extra):
    overrides = {
        "seed": ctx_obj.get("seed"),
        "window": ctx_obj.get("window"),
        "models": ctx_obj.get("models"),
        "out": ctx_obj.get("out"),
    }
    overrides.update(extra)
    try:
        return load_config(ctx_obj.get("config"), overrides)
    except (GreyQueueError, OSError, ValueError) as exc:
        _fail(str(exc))


def _out_dir(cfg) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _fail(f"cannot create output directory {out}: {exc}")
    return out


def _select(cfg, counter: str, kind: str):
    try:
        datasets = load_datasets(cfg)
    except (GreyQueueError, OSError, ValueError) as exc:
        _fail(str(exc))
    for ds in datasets:
        if ds.counter_id == counter and ds.kind.value == kind:
            return ds
    _fail(f"no dataset for counter {counter!r} kind {kind!r}")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=int, help="Master seed.")
@click.option("--models", help="Comma-separated model list, e.g. GM,EGVM,LINEAR.")
@click.option("--window", type=int, help="Rolling window size for Grey models (>= 4).")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, out, seed, models, window, verbose):
    """Grey-model queue length forecasting benchmark."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    ctx.obj = {"config": config_path, "out": out, "seed": seed, "models": models, "window": window}


@main.command()
@click.pass_obj
def synth(obj):
    """Generate the configured scenarios as queue-counter CSV."""
    cfg = _config(obj)
    if not cfg.scenarios:
        _fail("config defines no scenarios")
    out = _out_dir(cfg)
    datasets = []
    meta = []
    for sc in cfg.scenarios:
        datasets.extend(generate_queue_scenario(sc))
        meta.append((sc.counter_id, sc.lanes, sc.regime, sc.arrival_rate, sc.capacity, sc.seed))
        click.echo(f"{sc.counter_id}\tlanes={sc.lanes}\t{sc.regime}\tdemand/capacity={sc.arrival_rate / sc.capacity:.3f}")
    try:
        write_csv(datasets, out / "queues.csv")
        with open(out / "scenarios.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["counter_id", "lanes", "regime", "arrival_rate", "capacity", "seed"])
            for row in meta:
                w.writerow([row[0], row[1], row[2], format_value(row[3]), format_value(row[4]), row[5]])
    except OSError as exc:
        _fail(f"cannot write output: {exc}")
    click.echo(f"wrote {out / 'queues.csv'}")


@main.command()
@click.option("--jobs", type=int, help="Worker processes.")
@click.pass_obj
def bench(obj, jobs):
    """Run every model on every counter and write the report."""
    cfg = _config(obj, jobs=jobs)
    out = _out_dir(cfg)
    try:
        report = run_bench(cfg)
    except (GreyQueueError, OSError, ValueError) as exc:
        _fail(str(exc))
    paths = write_report(report, out)
    for model, t in mean_timings(report).items():
        if t["fit_time_s"] is None:
            continue
        click.echo(f"{model:8s} rmse median={_median(report, model):10.3f}  train={t['fit_time_s']:.4f}s  test/step={t['predict_time_per_step_s']:.2e}s")
    click.echo(f"report: {paths['json']}")
    if report.failed:
        click.echo(f"{len(report.failed)} model/counter cells failed", err=True)
        sys.exit(EXIT_PARTIAL)


def _median(report, model):
    import numpy as np

    vals = report.values(model)
    return float(np.median(vals)) if vals.size else float("nan")


def format_params(model: ArModel | LstarModel) -> str:
    """Parameter table laid out like the usual fitted-model summaries."""
    p = model.params()
    if isinstance(model, ArModel):
        head = f"LINEAR(AR({model.order}))"
        return head + "\n  " + "  ".join(f"{k}={v:.6g}" for k, v in p.items()) + "\n"
    low = "  ".join(f"{k}={p[k]:.6g}" for k in p if k.startswith("phi1"))
    high = "  ".join(f"{k}={p[k]:.6g}" for k in p if k.startswith("phi2"))
    return (
        f"LSTAR({model.L},{model.H},{model.delta})\n"
        f"  L   {low}\n"
        f"  H   {high}\n"
        f"  th  X_t=Z_t  th={model.th:.6g}  gamma={model.gamma:.6g}\n"
    )


@main.command()
@click.option("--counter", required=True)
@click.option("--kind", type=click.Choice(["avg", "max"]), default="avg", show_default=True)
@click.option("--model", type=click.Choice(["LINEAR", "LSTAR"], case_sensitive=False), required=True)
@click.pass_obj
def fit(obj, counter, kind, model):
    """Fit a baseline on the training split and print its parameters."""
    cfg = _config(obj)
    ds = _select(cfg, counter, kind)
    train, _ = split(ds, SplitSpec(cfg.train_fraction))
    try:
        fitted = fit_baseline(model.upper(), train, cfg)
    except (GreyQueueError, ValueError) as exc:
        click.echo(f"fit failed for {model} on {counter}/{kind}: {exc}", err=True)
        sys.exit(EXIT_PARTIAL)
    click.echo(format_params(fitted), nl=False)


@main.command()
@click.option("--counter", required=True)
@click.option("--kind", type=click.Choice(["avg", "max"]), default="avg", show_default=True)
@click.option("--model", type=click.Choice([m.value for m in ModelName], case_sensitive=False), required=True)
@click.pass_obj
def forecast(obj, counter, kind, model):
    """Write one-step predictions on the test split as CSV."""
    cfg = _config(obj)
    ds = _select(cfg, counter, kind)
    try:
        run = run_model(model.upper(), ds, cfg)
    except (GreyQueueError, ValueError) as exc:
        click.echo(f"forecast failed: {exc}", err=True)
        sys.exit(EXIT_PARTIAL)
    out = _out_dir(cfg)
    path = out / f"forecast_{counter}_{kind}_{model.upper()}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "truth", "prediction", "residual"])
        for t, y, p in zip(run.times, run.truth, run.predictions):
            w.writerow([int(t), format_value(y), format_value(p), format_value(y - p)])
    click.echo(str(path))


if __name__ == "__main__":
    main()
