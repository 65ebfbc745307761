"""Hourly price series: CSV ingestion, trailing-window scaling and a synthetic generator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

HOUR = timedelta(hours=1)
SCALE_FLOOR = 1e-6
DEFAULT_COLUMNS = ("timestamp", "price_usd_per_mwh")


class DataError(ValueError):
    """Raised when price data violates the series invariants."""


def parse_time(text: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class PriceSeries:
    """Uniformly spaced hourly prices starting at ``start_time`` (UTC, top of hour)."""

    start_time: datetime
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DataError("empty series")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite prices")
        start = self.start_time
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        if start.minute or start.second or start.microsecond:
            raise DataError(f"start time {start} is not at the top of an hour")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "start_time", start.astimezone(timezone.utc))

    def __len__(self) -> int:
        return self.values.size

    def time_at(self, k: int) -> datetime:
        return self.start_time + k * HOUR

    def timestamps(self) -> list[datetime]:
        return [self.time_at(k) for k in range(len(self))]

    def index_of(self, ts: datetime) -> int:
        """Hour offset of ``ts`` from the series start (may lie outside the series)."""
        if isinstance(ts, str):
            ts = parse_time(ts)
        elif ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        hours, rem = divmod(ts - self.start_time, HOUR)
        if rem:
            raise DataError(f"{ts} is not on the hourly grid")
        return hours

    def slice(self, start: int, stop: int | None = None) -> "PriceSeries":
        stop = len(self) if stop is None else stop
        return PriceSeries(self.time_at(start), self.values[start:stop])


@dataclass(frozen=True)
class ScalerStats:
    center: float
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.center) and self.scale > 0 and math.isfinite(self.scale)):
            raise DataError(f"invalid scaler stats center={self.center} scale={self.scale}")


@dataclass(frozen=True)
class SynthConfig:
    days: int = 90
    base: float = 40.0
    daily_amplitude: float = 15.0
    noise_ar_coeff: float = 0.7
    noise_std: float = 3.0
    spike_prob: float = 0.01
    spike_scale: float = 20.0
    seed: int = 0
    start: str = "2021-01-01T00:00:00Z"

    def validate(self) -> None:
        if self.days < 1:
            raise DataError("days must be positive")
        if not -1.0 < self.noise_ar_coeff < 1.0:
            raise DataError("noise_ar_coeff must lie in (-1, 1)")
        if self.noise_std < 0 or self.spike_scale < 0:
            raise DataError("noise_std and spike_scale must be non-negative")
        if not 0.0 <= self.spike_prob <= 1.0:
            raise DataError("spike_prob must lie in [0, 1]")


def load_price_csv(
    path: str | Path,
    timestamp_column: str = DEFAULT_COLUMNS[0],
    price_column: str = DEFAULT_COLUMNS[1],
    fill_gaps: bool = False,
) -> PriceSeries:
    """Read an hourly price CSV.

    Rows are sorted by timestamp before validation. Duplicate hours are always
    an error; missing hours are an error unless ``fill_gaps`` is set, in which
    case they are linearly interpolated.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"price file not found: {path}")
    rows: list[tuple[datetime, float]] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for col in (timestamp_column, price_column):
            if col not in fields:
                raise DataError(f"{path}: missing column {col!r} (have {fields})")
        # header is line 1
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = parse_time(row[timestamp_column])
                price = float(row[price_column])
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: unparseable row {lineno}: {exc}") from None
            if not math.isfinite(price):
                raise DataError(f"{path}: non-finite price in row {lineno}")
            rows.append((ts, price))
    if not rows:
        raise DataError("empty series")
    rows.sort(key=lambda r: r[0])
    start = rows[0][0]
    if start.minute or start.second or start.microsecond:
        raise DataError(f"{path}: timestamp {format_time(start)} is not at the top of an hour")

    offsets = []
    for ts, _ in rows:
        hours, rem = divmod(ts - start, HOUR)
        if rem:
            raise DataError(f"{path}: timestamp {format_time(ts)} is off the hourly grid")
        offsets.append(hours)
    for prev, cur in zip(offsets, offsets[1:]):
        if cur == prev:
            raise DataError(f"{path}: duplicate timestamp {format_time(start + cur * HOUR)}")
        if cur != prev + 1 and not fill_gaps:
            raise DataError(f"{path}: missing hour {format_time(start + (prev + 1) * HOUR)}")

    prices = np.array([p for _, p in rows])
    if offsets[-1] + 1 != len(rows):
        grid = np.arange(offsets[-1] + 1)
        prices = np.interp(grid, np.array(offsets, dtype=float), prices)
    return PriceSeries(start, prices)


def write_price_csv(
    series: PriceSeries,
    path: str | Path,
    timestamp_column: str = DEFAULT_COLUMNS[0],
    price_column: str = DEFAULT_COLUMNS[1],
) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([timestamp_column, price_column])
        for k, value in enumerate(series.values):
            writer.writerow([format_time(series.time_at(k)), repr(float(value))])


def fit_scaler(values: PriceSeries | Sequence[float] | np.ndarray, window: int) -> ScalerStats:
    """Mean and population standard deviation of the trailing ``window`` values."""
    arr = values.values if isinstance(values, PriceSeries) else np.asarray(values, dtype=float)
    if window < 2:
        raise DataError(f"scaler window must be at least 2, got {window}")
    if window > arr.size:
        raise DataError(f"scaler window {window} exceeds series length {arr.size}")
    tail = arr[-window:]
    return ScalerStats(float(tail.mean()), max(float(tail.std()), SCALE_FLOOR))


def standardize(x, stats: ScalerStats):
    return (x - stats.center) / stats.scale


def inverse_standardize(z, stats: ScalerStats):
    return z * stats.scale + stats.center


def synth_prices(cfg: SynthConfig) -> PriceSeries:
    """Sinusoidal daily profile plus AR(1) noise plus sparse positive spikes."""
    cfg.validate()
    n = 24 * cfg.days
    rng = np.random.default_rng(cfg.seed)
    innovations = rng.standard_normal(n) * cfg.noise_std
    spike_mask = rng.random(n) < cfg.spike_prob
    spike_size = rng.exponential(1.0, n) * cfg.spike_scale

    noise = np.empty(n)
    level = 0.0
    for k in range(n):
        level = cfg.noise_ar_coeff * level + innovations[k]
        noise[k] = level
    k = np.arange(n)
    values = cfg.base + cfg.daily_amplitude * np.sin(2 * np.pi * k / 24) + noise
    values = values + np.where(spike_mask, spike_size, 0.0)
    return PriceSeries(parse_time(cfg.start), values)
