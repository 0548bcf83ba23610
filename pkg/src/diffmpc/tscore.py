"""Hourly time-series containers, chronological splitting, error metrics,
and a synthetic park dataset generator (load / PV availability / wind
availability at 1 h resolution)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidSplitError(ValueError):
    pass


class InvalidConfigError(ValueError):
    pass


class MetricError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    """Real-valued hourly series in kW, starting at hour index ``start_hour``."""

    values: np.ndarray
    start_hour: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise InvalidConfigError("series must be 1-D with at least one value")
        if not np.all(np.isfinite(v)):
            raise InvalidConfigError("series contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    def hour_of_day(self, i: int) -> int:
        return (self.start_hour + i) % 24


@dataclass(frozen=True)
class Dataset:
    """Aligned load and renewable-availability series of equal length."""

    load: TimeSeries
    pv_max: TimeSeries
    wind_max: TimeSeries

    def __post_init__(self):
        n = len(self.load)
        if len(self.pv_max) != n or len(self.wind_max) != n:
            raise InvalidConfigError("load, pv_max and wind_max must have equal length")
        for name in ("load", "pv_max", "wind_max"):
            if np.any(getattr(self, name).values < 0):
                raise InvalidConfigError(f"{name} must be non-negative")

    def __len__(self):
        return len(self.load)

    @property
    def start_hour(self) -> int:
        return self.load.start_hour


@dataclass(frozen=True)
class SplitSpec:
    train_len: int
    test_len: int


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Chronological split: train = prefix of ``train_len`` hours, test = suffix.

    Concatenating the two parts reproduces ``ds`` exactly; the test part is
    never touched by augmentation downstream.
    """
    n = len(ds)
    if spec.train_len < 1 or spec.test_len < 1:
        raise InvalidSplitError("train_len and test_len must both be >= 1")
    if spec.train_len + spec.test_len != n:
        raise InvalidSplitError(
            f"train_len + test_len = {spec.train_len + spec.test_len} != dataset length {n}"
        )
    cut = spec.train_len

    def part(lo, hi, start):
        return Dataset(
            load=TimeSeries(ds.load.values[lo:hi], start),
            pv_max=TimeSeries(ds.pv_max.values[lo:hi], start),
            wind_max=TimeSeries(ds.wind_max.values[lo:hi], start),
        )

    return part(0, cut, ds.start_hour), part(cut, n, ds.start_hour + cut)


def mae(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, truth) -> float:
    p, t = _paired(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def _paired(pred, truth):
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise MetricError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size < 1:
        raise MetricError("empty series")
    return p, t


def minmax_normalize(values, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        # degenerate (constant) series maps to 0.5
        return np.full_like(np.asarray(values, dtype=float), 0.5)
    return (np.asarray(values, dtype=float) - lo) / (hi - lo)


def minmax_denormalize(values, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.full_like(np.asarray(values, dtype=float), lo)
    return np.asarray(values, dtype=float) * (hi - lo) + lo


def gen_synthetic(seed: int, days: int, caps: dict | None = None) -> Dataset:
    """Deterministic synthetic week standing in for the private park telemetry.

    load     = daily double-peak profile + weekly modulation + bounded noise
    pv_max   = clear-sky bell (zero when the sun is down) x daily cloud factor
    wind_max = mean-reverting bounded random walk with a slow regime drift
    """
    caps = dict(caps or {})
    pv_cap = float(caps.get("pv", 600.0))
    wind_cap = float(caps.get("wind", 500.0))
    load_peak = float(caps.get("load_peak", 800.0))
    if days < 1:
        raise InvalidConfigError("days must be >= 1")
    if pv_cap <= 0 or wind_cap <= 0 or load_peak <= 0:
        raise InvalidConfigError("caps must be positive")

    n = days * 24
    rng = np.random.default_rng([int(seed), 0x7C0DE])
    h = np.arange(n)
    hod = h % 24
    day = h // 24

    # Load: morning peak ~9h, evening peak ~19h, overnight valley.
    morning = np.exp(-0.5 * ((hod - 9.0) / 2.8) ** 2)
    evening = np.exp(-0.5 * ((hod - 19.0) / 2.2) ** 2)
    base = 0.38 + 0.42 * morning + 0.55 * evening
    weekly = 1.0 - 0.12 * np.cos(2 * np.pi * (day % 7) / 7.0)
    noise = rng.uniform(-0.03, 0.03, size=n)
    load = load_peak * np.clip(base * weekly / base.max() + noise, 0.02, 1.0)

    # PV availability: sun up between 06 and 18, bell peaked at noon.
    elevation = np.sin(np.pi * (hod - 6.0) / 12.0)
    clear_sky = np.where((hod > 6) & (hod < 18), np.maximum(elevation, 0.0), 0.0)
    cloud_day = rng.uniform(0.55, 1.0, size=days)[day]
    cloud_hour = 1.0 - 0.15 * rng.uniform(0.0, 1.0, size=n)
    pv = pv_cap * clear_sky * cloud_day * cloud_hour

    # Wind availability: OU-style walk around a slowly drifting mean so the
    # within-week dynamics are not stationary.
    drift = 0.45 + 0.20 * np.sin(2 * np.pi * h / (24.0 * 3.0))
    wind = np.empty(n)
    w = 0.5 * wind_cap
    for i in range(n):
        mu = drift[i] * wind_cap
        w = w + 0.25 * (mu - w) + 0.05 * wind_cap * rng.standard_normal()
        w = min(max(w, 0.0), wind_cap)
        wind[i] = w

    return Dataset(
        load=TimeSeries(load, 0),
        pv_max=TimeSeries(pv, 0),
        wind_max=TimeSeries(wind, 0),
    )


DATASET_HEADER = "hour,load_kw,pv_max_kw,wind_max_kw"


def write_dataset_csv(path, ds: Dataset) -> None:
    with open(path, "w") as f:
        f.write(DATASET_HEADER + "\n")
        for i in range(len(ds)):
            f.write(
                "%d,%.10g,%.10g,%.10g\n"
                % (i, ds.load.values[i], ds.pv_max.values[i], ds.wind_max.values[i])
            )


def read_dataset_csv(path) -> Dataset:
    with open(path) as f:
        header = f.readline().strip()
        if header != DATASET_HEADER:
            raise DatasetFormatError(f"bad header {header!r}, expected {DATASET_HEADER!r}")
        rows = []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise DatasetFormatError(f"line {lineno}: expected 4 columns")
            rows.append([float(x) for x in parts])
    if not rows:
        raise DatasetFormatError("empty dataset file")
    arr = np.asarray(rows)
    hours = arr[:, 0].astype(int)
    if not np.array_equal(hours, np.arange(len(hours))):
        raise DatasetFormatError("hour column must increase strictly from 0")
    return Dataset(
        load=TimeSeries(arr[:, 1], 0),
        pv_max=TimeSeries(arr[:, 2], 0),
        wind_max=TimeSeries(arr[:, 3], 0),
    )
