"""Time-weighted distributions, temperature spread and channel power statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import BatterySystemSpec, ProbabilityHistogram, TelemetryError, TelemetrySample, TimeSeries
from .integrate import DEFAULT_GAP_THRESHOLD, fluctuation, valid_intervals


class NoFiniteWeights(TelemetryError):
    pass


class ZeroMean(TelemetryError):
    pass


# default bin grids, sized to the granularity of typical fleet plots
C_RATE_EDGES = tuple(np.round(np.arange(0.0, 0.25 + 1e-9, 0.005), 6))
TEMPERATURE_EDGES = tuple(float(x) for x in range(-10, 51))
DELTA_T_EDGES = tuple(float(x) for x in range(0, 11))
DAILY_CAPACITY_EDGES = tuple(float(x) for x in range(0, 205, 5))
DAILY_DELTA_C_EDGES = tuple(float(x) for x in range(-100, 105, 5))
DAILY_ENERGY_EDGES = tuple(np.round(np.arange(0.0, 10.0 + 1e-9, 0.25), 6))
DAILY_DELTA_E_EDGES = tuple(np.round(np.arange(-5.0, 5.0 + 1e-9, 0.25), 6))


def temp_spread(sample: TelemetrySample) -> float:
    return max(sample.temp) - min(sample.temp)


def temp_spreads(series: TimeSeries) -> np.ndarray:
    temp = series.temp.astype(np.float64)
    return temp.max(axis=1) - temp.min(axis=1)


def holding_weights(t: np.ndarray, gap_threshold: float = DEFAULT_GAP_THRESHOLD, gap_policy: str = "exclude") -> np.ndarray:
    """Seconds each sample's value is held: time to the next sample, 0 for the last and across holes."""
    w = np.zeros(len(t))
    if len(t) > 1:
        w[:-1] = np.where(valid_intervals(t, gap_threshold, gap_policy), np.diff(t), 0.0)
    return w


def weighted_histogram(values, weights, bin_edges: Sequence[float], weight_kind: str = "time-weighted") -> ProbabilityHistogram:
    """Normalised histogram. Values below/above the edges land in underflow/overflow;
    the right-most edge is inclusive. NaN values are ignored."""
    edges = np.asarray(bin_edges, dtype=np.float64)
    if len(edges) < 2 or not np.all(np.diff(edges) > 0):
        raise ValueError("bin_edges must be ascending with at least two entries")
    values = np.asarray(values, dtype=np.float64)
    weights = np.broadcast_to(np.asarray(weights, dtype=np.float64), values.shape)
    keep = np.isfinite(values) & np.isfinite(weights) & (weights > 0)
    values, weights = values[keep], weights[keep]
    total = float(np.sum(weights))
    if not (total > 0 and math.isfinite(total)):
        raise NoFiniteWeights("no positive finite weight to normalise")
    idx = np.searchsorted(edges, values, side="right") - 1
    idx[values == edges[-1]] = len(edges) - 2
    nb = len(edges) - 1
    under = float(np.sum(weights[idx < 0])) / total
    over = float(np.sum(weights[idx >= nb])) / total
    inside = (idx >= 0) & (idx < nb)
    probs = np.bincount(idx[inside], weights=weights[inside], minlength=nb) / total
    return ProbabilityHistogram(
        bin_edges=tuple(float(e) for e in edges),
        probabilities=tuple(float(p) for p in probs),
        weight_kind=weight_kind,
        underflow=under,
        overflow=over,
    )


def time_weighted_histogram(
    series: TimeSeries,
    value_fn: Callable[[TimeSeries], np.ndarray],
    bin_edges: Sequence[float],
    *,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    gap_policy: str = "exclude",
) -> ProbabilityHistogram:
    """Distribution of ``value_fn(series)`` with each sample weighted by its holding time.

    ``value_fn`` maps the series to one value per sample; NaN drops a sample.
    """
    if not len(series):
        raise NoFiniteWeights("empty series")
    values = np.asarray(value_fn(series), dtype=np.float64)
    if values.shape != (len(series),):
        raise ValueError("value_fn must return one value per sample")
    return weighted_histogram(values, holding_weights(series.t, gap_threshold, gap_policy), bin_edges)


def count_histogram(values, bin_edges: Sequence[float]) -> ProbabilityHistogram:
    values = np.asarray(values, dtype=np.float64)
    return weighted_histogram(values, np.ones_like(values), bin_edges, weight_kind="count-weighted")


def charge_c_rate(spec: BatterySystemSpec = BatterySystemSpec()) -> Callable[[TimeSeries], np.ndarray]:
    def fn(series: TimeSeries) -> np.ndarray:
        i = series.current
        return np.where(i > 0, i / spec.nominal_capacity, np.nan)

    return fn


def discharge_c_rate(spec: BatterySystemSpec = BatterySystemSpec()) -> Callable[[TimeSeries], np.ndarray]:
    def fn(series: TimeSeries) -> np.ndarray:
        i = series.current
        return np.where(i < 0, -i / spec.nominal_capacity, np.nan)

    return fn


def max_temperature(series: TimeSeries) -> np.ndarray:
    return series.temp.max(axis=1).astype(np.float64)


def min_temperature(series: TimeSeries) -> np.ndarray:
    return series.temp.min(axis=1).astype(np.float64)


@dataclass(frozen=True)
class PowerChannelStats:
    max: float
    min: float
    mean: float
    std: float
    fluctuation: float  # percent

    def as_dict(self) -> dict:
        return {"max": self.max, "min": self.min, "mean": self.mean, "std": self.std, "fluctuation": self.fluctuation}


def power_channel_stats(channel: Sequence[tuple[float, float]]) -> PowerChannelStats:
    """Time-weighted statistics of a power channel given as (t, watts) pairs.

    Each point carries half of each adjacent interval, so the mean equals the
    trapezoidal average power.
    """
    if len(channel) < 2:
        raise ValueError("need at least two points")
    t = np.array([c[0] for c in channel], dtype=np.float64)
    p = np.array([c[1] for c in channel], dtype=np.float64)
    dt = np.diff(t)
    if not np.all(dt > 0):
        raise ValueError("channel time must be strictly increasing")
    w = np.zeros_like(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    mean = float(np.sum(w * p) / np.sum(w))
    std = float(math.sqrt(max(0.0, np.sum(w * (p - mean) ** 2) / np.sum(w))))
    if mean == 0:
        raise ZeroMean("fluctuation undefined for a zero-mean channel")
    return PowerChannelStats(float(p.max()), float(p.min()), mean, std, fluctuation(mean, std))
