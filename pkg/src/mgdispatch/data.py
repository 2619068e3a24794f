"""Hourly microgrid time series: ingestion, hour-of-day reshaping,
history-window construction, and a synthetic data generator.

The forecasting side of the package never sees raw timestamps: each hour
of the day becomes its own sub-series (one value per day) and each
training sample is a window of the same hour on seven consecutive days
plus the day-8 target.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

SOURCES = ("load", "wt", "pv")
CSV_HEADER = ["timestamp", "load_kw", "wt_kw", "pv_kw"]
WINDOW = 7
TRAIN_FRACTION = 0.8


class DataError(ValueError):
    """Invalid input data (bad file, bad schema, broken invariants)."""


class NormalizationError(DataError):
    """Constant series: min-max normalization is undefined."""


@dataclass(frozen=True)
class HourlyRecord:
    timestamp: datetime
    load_kw: float
    wt_kw: float
    pv_kw: float

    def value(self, source: str) -> float:
        return {"load": self.load_kw, "wt": self.wt_kw, "pv": self.pv_kw}[source]


@dataclass(frozen=True)
class SubSeries:
    """All values a given source took at one hour of the day, in day order."""

    hour: int
    source: str
    values: np.ndarray


@dataclass(frozen=True)
class SplitDataset:
    """Chronological train/test windows, min-max normalized to the train range.

    ``X_*`` rows hold the 7-day history, ``y_*`` the day-8 target.  The
    normalization constants come from the train portion only, so test
    values may fall slightly outside [0, 1].
    """

    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    norm_min: float
    norm_max: float

    def denormalize(self, values):
        return self.norm_min + np.asarray(values) * (self.norm_max - self.norm_min)

    def normalize(self, values):
        return (np.asarray(values) - self.norm_min) / (self.norm_max - self.norm_min)


def _check_source(source: str):
    if source not in SOURCES:
        raise DataError(f"unknown source {source!r}, expected one of {SOURCES}")


def load_csv(path) -> list[HourlyRecord]:
    """Parse and validate an hourly CSV (header ``timestamp,load_kw,wt_kw,pv_kw``).

    Records are returned sorted by timestamp; spacing must be exactly one
    hour and every power value non-negative.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: header must be {','.join(CSV_HEADER)!r}, got {header}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
            for name, v in zip(CSV_HEADER[1:], vals):
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: non-finite {name}")
                if v < 0:
                    raise DataError(f"{path}:{lineno}: negative {name} ({v})")
            records.append(HourlyRecord(ts, *vals))
    if not records:
        raise DataError(f"{path}: no data rows")
    records.sort(key=lambda r: r.timestamp)
    step = timedelta(hours=1)
    for prev, cur in zip(records, records[1:]):
        if cur.timestamp - prev.timestamp != step:
            raise DataError(
                f"{path}: records must be exactly 1h apart, got "
                f"{prev.timestamp} -> {cur.timestamp}"
            )
    return records


def write_csv(records, path):
    """Write records in the canonical CSV schema (deterministic formatting)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([r.timestamp.isoformat(sep=" "),
                             repr(float(r.load_kw)), repr(float(r.wt_kw)), repr(float(r.pv_kw))])


def complete_day_matrix(records, source: str) -> np.ndarray:
    """(n_days, 24) value matrix over complete days; partial leading and
    trailing days are dropped."""
    _check_source(source)
    recs = sorted(records, key=lambda r: r.timestamp)
    start = 0
    while start < len(recs) and recs[start].timestamp.hour != 0:
        start += 1
    end = len(recs)
    while end > start and recs[end - 1].timestamp.hour != 23:
        end -= 1
    recs = recs[start:end]
    n_days = len(recs) // 24
    if n_days * 24 != len(recs):
        raise DataError("incomplete day inside the record range (non-hourly data?)")
    vals = np.array([r.value(source) for r in recs], dtype=float)
    return vals.reshape(n_days, 24)


def reshape_to_subseries(records, source: str) -> list[SubSeries]:
    """Split the hourly series into 24 per-hour sub-series (one value per day)."""
    matrix = complete_day_matrix(records, source)
    if matrix.shape[0] < 8:
        raise DataError(
            f"need at least 8 complete days to build a history window, got {matrix.shape[0]}"
        )
    return [SubSeries(hour, source, matrix[:, hour].copy()) for hour in range(24)]


def build_windows(series: SubSeries, train_fraction: float = TRAIN_FRACTION,
                  window: int = WINDOW) -> SplitDataset:
    """Sliding (history, target) windows with a chronological train/test split.

    Min-max constants are computed from the train portion of the raw values
    and applied to both splits.
    """
    values = np.asarray(series.values, dtype=float)
    n = len(values) - window
    if n < 1:
        raise DataError(f"series too short for a {window}-day window: {len(values)} values")
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n)
    train_raw = values[: n_train + window]
    lo, hi = float(train_raw.min()), float(train_raw.max())
    if hi <= lo:
        raise NormalizationError(
            f"constant series (hour {series.hour}, {series.source}): "
            f"min-max normalization undefined"
        )
    scaled = (values - lo) / (hi - lo)
    X = np.lib.stride_tricks.sliding_window_view(scaled[:-1], window)[:n]
    y = scaled[window:]
    return SplitDataset(
        X_train=X[:n_train].copy(), y_train=y[:n_train].copy(),
        X_test=X[n_train:].copy(), y_test=y[n_train:].copy(),
        norm_min=lo, norm_max=hi,
    )


# ----------------------------------------------------------------------
# Synthetic generator
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Settings for the synthetic microgrid dataset.

    Shapes are fixed, documented formulas so runs are reproducible:

    * load: base level with morning/evening gaussian peaks, a night dip,
      weekend attenuation, and multiplicative noise;
    * pv: clear-sky half-sine over the daylight window scaled by a slow
      AR(1) cloud factor, zero at night;
    * wt: AR(1) wind speed pushed through a cut-in/rated/cut-out power curve.
    """

    days: int = 120
    start: str = "2015-01-01"
    load_base_kw: float = 60.0
    load_noise: float = 0.03
    wt_rated_kw: float = 30.0
    pv_peak_kw: float = 30.0
    wind_mean_ms: float = 8.0
    cut_in_ms: float = 3.0
    rated_ms: float = 12.0
    cut_out_ms: float = 25.0

    def validate(self):
        if self.days < 8:
            raise DataError(f"horizon must cover at least 8 days, got {self.days}")
        if min(self.load_base_kw, self.wt_rated_kw, self.pv_peak_kw) < 0:
            raise DataError("generator power levels must be non-negative")


def _wind_power_curve(v, cut_in, rated, cut_out):
    p = np.zeros_like(v)
    ramp = (v >= cut_in) & (v < rated)
    p[ramp] = (v[ramp] ** 3 - cut_in ** 3) / (rated ** 3 - cut_in ** 3)
    p[(v >= rated) & (v < cut_out)] = 1.0
    return p


def synthesize(config: SynthConfig, seed: int) -> list[HourlyRecord]:
    """Deterministic synthetic dataset for the given seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    H = config.days * 24
    t0 = datetime.fromisoformat(config.start)
    hours = np.arange(H)
    hod = hours % 24
    day = hours // 24
    dow = (day + t0.weekday()) % 7

    def bump(center, width):
        return np.exp(-0.5 * ((hod - center) / width) ** 2)

    shape = 1.0 + 0.30 * bump(9.0, 2.0) + 0.45 * bump(19.0, 2.5) - 0.25 * bump(3.5, 3.0)
    weekly = np.where(dow >= 5, 0.92, 1.0)
    load = config.load_base_kw * shape * weekly * (
        1.0 + config.load_noise * rng.standard_normal(H)
    )

    daylight = np.maximum(0.0, np.sin(np.pi * (hod - 6) / 12.0))
    cloud = np.empty(H)
    c = rng.uniform(0.5, 1.0)
    for i in range(H):
        c = 0.96 * c + 0.04 * 0.75 + 0.05 * rng.standard_normal()
        cloud[i] = min(max(c, 0.25), 1.0)
    pv = config.pv_peak_kw * cloud * daylight ** 1.3

    wind = np.empty(H)
    v = config.wind_mean_ms
    for i in range(H):
        v = 0.93 * v + 0.07 * config.wind_mean_ms + 0.9 * rng.standard_normal()
        wind[i] = max(v, 0.0)
    wt = config.wt_rated_kw * _wind_power_curve(
        wind, config.cut_in_ms, config.rated_ms, config.cut_out_ms
    )

    load = np.maximum(load, 0.0)
    return [
        HourlyRecord(t0 + timedelta(hours=int(h)),
                     float(load[h]), float(wt[h]), float(pv[h]))
        for h in hours
    ]
