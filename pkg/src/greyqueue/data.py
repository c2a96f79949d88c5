"""Queue-counter datasets: CSV codec, train/test split, synthetic signal queues."""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from greyqueue.errors import DataError
from greyqueue.grey import Series

CSV_HEADER = ("time_s", "counter_id", "kind", "lanes", "intersection", "queue_m")
DEFAULT_VEHICLE_LENGTH = 7.5  # meters, vehicle plus standstill gap
DEFAULT_TRAIN_FRACTION = 0.67


class QueueKind(str, enum.Enum):
    AVERAGE = "avg"
    MAXIMUM = "max"


@dataclass(frozen=True)
class CounterDataset:
    counter_id: str
    lanes: int
    intersection: int
    kind: QueueKind
    series: Series
    saturated: bool | None = None

    def __post_init__(self):
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")
        object.__setattr__(self, "kind", QueueKind(self.kind))

    @property
    def key(self) -> tuple[str, str]:
        return (self.counter_id, self.kind.value)


# ---------------------------------------------------------------- CSV codec


def _parse_row(row: list[str], lineno: int):
    if len(row) != len(CSV_HEADER):
        raise DataError(f"line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
    time_s, counter_id, kind, lanes, intersection, queue = (c.strip() for c in row)
    try:
        t = int(time_s)
        n_lanes = int(lanes)
        inter = int(intersection)
    except ValueError as exc:
        raise DataError(f"line {lineno}: non-integer time/lanes/intersection ({exc})") from None
    if kind not in ("avg", "max"):
        raise DataError(f"line {lineno}: kind must be 'avg' or 'max', got {kind!r}")
    if not counter_id:
        raise DataError(f"line {lineno}: empty counter_id")
    if n_lanes < 1:
        raise DataError(f"line {lineno}: lanes must be >= 1")
    if queue == "":
        value = math.nan
    else:
        try:
            value = float(queue)
        except ValueError:
            raise DataError(f"line {lineno}: non-numeric queue_m {queue!r}") from None
        if not math.isfinite(value):
            raise DataError(f"line {lineno}: non-finite queue_m {queue!r}")
        if value < 0:
            raise DataError(f"line {lineno}: negative queue length {value}")
    return t, counter_id, kind, n_lanes, inter, value


def _impute(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Carry the previous observation forward over gaps (leading gaps take the first one)."""
    missing = np.isnan(values)
    if missing.all():
        raise DataError("series has no observed values")
    out = values.copy()
    first = int(np.argmax(~missing))
    out[:first] = out[first]
    for i in range(first + 1, out.size):
        if missing[i]:
            out[i] = out[i - 1]
    return out, missing


def read_csv(stream: Iterable[str]) -> list[CounterDataset]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise DataError(f"line 1: header must be {','.join(CSV_HEADER)}")
    groups: dict[tuple[str, str], dict] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        t, cid, kind, lanes, inter, value = _parse_row(row, lineno)
        g = groups.setdefault((cid, kind), {"lanes": lanes, "inter": inter, "t": [], "v": []})
        if (g["lanes"], g["inter"]) != (lanes, inter):
            raise DataError(f"line {lineno}: lanes/intersection change within counter {cid}")
        if g["t"] and t <= g["t"][-1]:
            raise DataError(f"line {lineno}: time_s not increasing for counter {cid}/{kind}")
        g["t"].append(t)
        g["v"].append(value)

    datasets = []
    for (cid, kind), g in groups.items():
        times = np.array(g["t"])
        steps = np.diff(times)
        period = int(steps.min()) if steps.size else 1
        if steps.size and np.any(steps % period):
            raise DataError(f"counter {cid}/{kind}: irregular time grid")
        # absent rows count as gaps, same as empty queue_m cells
        slots = np.full((times[-1] - times[0]) // period + 1, np.nan)
        slots[(times - times[0]) // period] = g["v"]
        values, missing = _impute(slots)
        series = Series(values, start_time=int(times[0]), period=period, label=f"{cid}/{kind}", missing=missing)
        datasets.append(CounterDataset(cid, g["lanes"], g["inter"], QueueKind(kind), series))
    return datasets


def load_csv(path: str | os.PathLike) -> list[CounterDataset]:
    """Parse a queue-counter CSV file into one dataset per (counter, kind)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh)


def format_value(v: float) -> str:
    return repr(float(v))


def write_csv(datasets: Iterable[CounterDataset], path: str | os.PathLike | io.TextIOBase) -> None:
    rows = []
    for ds in datasets:
        s = ds.series
        for t, v, miss in zip(s.times, s.values, s.missing if s.missing is not None else [False] * len(s)):
            rows.append((int(t), ds.counter_id, ds.kind.value, ds.lanes, ds.intersection, "" if miss else format_value(v)))
    if isinstance(path, io.TextIOBase):
        _write_rows(path, rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(fh, rows)


def _write_rows(fh, rows) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)


# ---------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = DEFAULT_TRAIN_FRACTION

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    def index(self, n: int) -> int:
        return math.floor(self.train_fraction * n)


def split(dataset: CounterDataset | Series, spec: SplitSpec = SplitSpec()) -> tuple[Series, Series]:
    """Contiguous train prefix and test suffix, time order preserved."""
    series = dataset.series if isinstance(dataset, CounterDataset) else dataset
    n = len(series)
    if n < 3:
        raise ValueError(f"series of length {n} too short to split")
    cut = spec.index(n)
    if not 0 < cut < n:
        raise ValueError(f"split at {cut} leaves an empty part (n={n})")
    return series.slice(0, cut), series.slice(cut, n)


# ---------------------------------------------------------------- generator


@dataclass(frozen=True)
class SignalScenario:
    """A fixed-time (optionally queue-responsive) signalized approach.

    Arrivals are Poisson at ``arrival_rate`` veh/s over all lanes; each
    lane discharges at ``saturation_flow`` veh/s while green.
    """

    cycle_length: int = 90
    green_fraction: float = 0.45
    arrival_rate: float = 0.2
    lanes: int = 1
    vehicle_length: float = DEFAULT_VEHICLE_LENGTH
    saturation_flow: float = 0.5
    duration: int = 3600
    seed: int = 0
    adaptive: bool = False
    counter_id: str = "QC1"
    intersection: int = 1

    def __post_init__(self):
        if self.cycle_length <= 0 or self.duration <= 0 or self.lanes < 1:
            raise ValueError("cycle_length, duration and lanes must be positive")
        if not 0 < self.green_fraction <= 1:
            raise ValueError("green_fraction must lie in (0, 1]")
        if self.arrival_rate < 0 or self.saturation_flow <= 0 or self.vehicle_length <= 0:
            raise ValueError("rates and vehicle_length must be positive")

    @property
    def capacity(self) -> float:
        return self.green_fraction * self.lanes * self.saturation_flow

    @property
    def saturated(self) -> bool:
        return self.arrival_rate >= self.capacity

    @property
    def regime(self) -> str:
        return "saturated" if self.saturated else "undersaturated"


def _green_seconds(fraction: float, cycle: int) -> int:
    return min(cycle, max(1, round(fraction * cycle)))


def simulate_queues(scenario: SignalScenario) -> np.ndarray:
    """Per-second vehicle counts queued in each lane, shape ``(duration, lanes)``.

    Each cycle starts with red. A vehicle stays counted until it crosses the
    stop line; one arriving during green behind an empty queue passes if a
    discharge slot is free.
    """
    sc = scenario
    rng = np.random.default_rng(sc.seed)
    queue = np.zeros(sc.lanes, dtype=np.int64)
    credit = np.zeros(sc.lanes)
    out = np.zeros((sc.duration, sc.lanes), dtype=np.int64)
    green = _green_seconds(sc.green_fraction, sc.cycle_length)
    cycle_peak = 0
    for t in range(sc.duration):
        pos = t % sc.cycle_length
        if pos == 0 and t > 0 and sc.adaptive:
            # lengthen green after a heavy cycle, within [10%, 90%] of the cycle
            load = cycle_peak * sc.lanes / max(sc.saturation_flow * sc.cycle_length * sc.lanes, 1e-9)
            frac = np.clip(sc.green_fraction * (0.75 + 0.5 * min(load, 1.0)), 0.1, 0.9)
            green = _green_seconds(frac, sc.cycle_length)
            cycle_peak = 0
        is_green = pos >= sc.cycle_length - green
        if pos == sc.cycle_length - green:
            credit[:] = 0.0
        for _ in range(rng.poisson(sc.arrival_rate)):
            shortest = np.flatnonzero(queue == queue.min())
            queue[shortest[rng.integers(shortest.size)] if shortest.size > 1 else shortest[0]] += 1
        if is_green:
            credit += sc.saturation_flow
            leave = np.minimum(queue, np.floor(credit).astype(np.int64))
            queue -= leave
            credit -= leave
            np.minimum(credit, np.where(queue == 0, 1.0, credit), out=credit)
        out[t] = queue
        cycle_peak = max(cycle_peak, int(queue.max()))
    return out


def generate_queue_scenario(scenario: SignalScenario) -> tuple[CounterDataset, CounterDataset]:
    """Simulate ``scenario`` and return the (average, maximum) queue-length datasets."""
    counts = simulate_queues(scenario)
    meters = counts * scenario.vehicle_length
    out = []
    for kind, values in ((QueueKind.AVERAGE, meters.mean(axis=1)), (QueueKind.MAXIMUM, meters.max(axis=1))):
        series = Series(values, start_time=0, period=1, label=f"{scenario.counter_id}/{kind.value}")
        out.append(
            CounterDataset(
                scenario.counter_id,
                scenario.lanes,
                scenario.intersection,
                kind,
                series,
                saturated=scenario.saturated,
            )
        )
    return out[0], out[1]


def saturated_scenario(seed: int, *, lanes: int = 1, load: float = 1.2, **kw) -> SignalScenario:
    """Scenario whose demand is ``load`` times its green-time capacity."""
    base = SignalScenario(lanes=lanes, seed=seed, **kw)
    return replace(base, arrival_rate=load * base.capacity)
