"""Coulomb and energy counting with the composite trapezoidal rule.

Sample intervals whose current changes sign are split at the linear zero
crossing, so charge and discharge throughput are separated exactly for
piecewise-linear current.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from ..core import BatterySystemSpec, TelemetryError, TimeSeries

DEFAULT_GAP_THRESHOLD = 600.0  # s; longer intervals are data holes
GAP_POLICIES = ("exclude", "raw")

AS_PER_AH = 3600.0
WS_PER_KWH = 3.6e6


class NonMonotonicTime(TelemetryError):
    pass


class EmptyInterval(TelemetryError):
    pass


class ZeroCharge(TelemetryError):
    pass


class CRate(NamedTuple):
    rate: float  # 1/h, always >= 0
    direction: str  # "charge", "discharge" or "idle"


def c_rate(current: float, spec: BatterySystemSpec = BatterySystemSpec()) -> CRate:
    rate = abs(current) / spec.nominal_capacity
    direction = "charge" if current > 0 else "discharge" if current < 0 else "idle"
    return CRate(rate, direction)


def trapezoid_integral(points: Iterable[tuple[float, float]]) -> float:
    """Integral of f dt from (t, f(t)) pairs on a non-uniform grid."""
    pts = list(points)
    if len(pts) < 2:
        return 0.0
    t = np.array([p[0] for p in pts], dtype=np.float64)
    f = np.array([p[1] for p in pts], dtype=np.float64)
    dt = np.diff(t)
    if not np.all(dt > 0):
        raise NonMonotonicTime("time must be strictly increasing")
    return float(np.sum((f[1:] + f[:-1]) * 0.5 * dt))


def valid_intervals(t: np.ndarray, gap_threshold: float = DEFAULT_GAP_THRESHOLD, gap_policy: str = "exclude") -> np.ndarray:
    """Mask of sample intervals that count toward integrals and time weights."""
    if gap_policy not in GAP_POLICIES:
        raise ValueError(f"gap_policy must be one of {GAP_POLICIES}, got {gap_policy!r}")
    dt = np.diff(t)
    if gap_policy == "raw":
        return np.ones(len(dt), dtype=bool)
    return dt <= gap_threshold


def signed_parts(i0, i1, p0, p1, dt):
    """Positive and negative areas of each trapezoid.

    The sign split uses the zero crossing of the current (i0 -> i1); the
    areas use the integrand endpoints (p0, p1), which equal the current for
    capacity and current * voltage for energy.
    """
    opp = ((i0 > 0) & (i1 < 0)) | ((i0 < 0) & (i1 > 0))
    denom = np.where(opp, i0 - i1, 1.0)
    frac = np.where(opp, i0 / denom, 0.0)  # fraction of dt before the crossing
    first = 0.5 * p0 * frac * dt
    second = 0.5 * p1 * (1.0 - frac) * dt
    whole = 0.5 * (p0 + p1) * dt
    nonneg = (i0 >= 0) & (i1 >= 0)
    nonpos = (i0 <= 0) & (i1 <= 0)
    pos = np.where(opp, np.where(i0 > 0, first, second), np.where(nonneg, whole, 0.0))
    neg = np.where(opp, np.where(i0 < 0, -first, -second), np.where(nonpos & ~nonneg, -whole, 0.0))
    return pos, neg


def insert_points(t: np.ndarray, cols: list[np.ndarray], valid: np.ndarray, at: np.ndarray):
    """Insert linearly interpolated samples at instants ``at`` strictly inside the span.

    Instants that coincide with existing samples are skipped. Each split
    interval passes its validity flag to both halves.
    """
    at = np.unique(np.asarray(at, dtype=np.float64))
    at = at[(at > t[0]) & (at < t[-1])]
    pos = np.searchsorted(t, at, side="left")
    fresh = t[pos] != at
    at, pos = at[fresh], pos[fresh]
    if not len(at):
        return t, cols, valid
    w = (at - t[pos - 1]) / (t[pos] - t[pos - 1])
    new_cols = [np.insert(c, pos, c[pos - 1] + (c[pos] - c[pos - 1]) * w) for c in cols]
    return np.insert(t, pos, at), new_cols, np.insert(valid, pos - 1, valid[pos - 1])


@dataclass(frozen=True)
class Throughput:
    """Per-bin charge and discharge throughput between consecutive edges."""

    edges: np.ndarray
    c_chg: np.ndarray  # Ah
    c_dis: np.ndarray
    e_chg: np.ndarray  # kWh
    e_dis: np.ndarray


def binned_throughput(
    t: np.ndarray,
    current: np.ndarray,
    voltage: np.ndarray | None,
    edges: np.ndarray,
    *,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    gap_policy: str = "exclude",
) -> Throughput:
    """Capacity (Ah) and energy (kWh) throughput in each [edges[k], edges[k+1]) bin."""
    t = np.asarray(t, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    nb = len(edges) - 1
    zeros = np.zeros(max(nb, 0))
    if len(t) < 2 or nb < 1:
        return Throughput(edges, zeros, zeros.copy(), zeros.copy(), zeros.copy())
    if not np.all(np.diff(t) > 0):
        raise NonMonotonicTime("time must be strictly increasing")
    current = np.asarray(current, dtype=np.float64)
    voltage = np.zeros_like(current) if voltage is None else np.asarray(voltage, dtype=np.float64)
    valid = valid_intervals(t, gap_threshold, gap_policy)
    t, (i, v), valid = insert_points(t, [current, voltage], valid, edges)

    dt = np.diff(t)
    p = i * v
    cp, cn = signed_parts(i[:-1], i[1:], i[:-1], i[1:], dt)
    ep, en = signed_parts(i[:-1], i[1:], p[:-1], p[1:], dt)

    k = np.searchsorted(edges, t[:-1], side="right") - 1
    inside = valid & (k >= 0) & (k < nb) & (t[1:] <= edges[np.clip(k + 1, 0, nb)])
    k = k[inside]

    def per_bin(x):
        return np.bincount(k, weights=x[inside], minlength=nb)[:nb]

    return Throughput(
        edges,
        per_bin(cp) / AS_PER_AH,
        per_bin(cn) / AS_PER_AH,
        per_bin(ep) / WS_PER_KWH,
        per_bin(en) / WS_PER_KWH,
    )


@dataclass(frozen=True)
class AccumulationResult:
    charge: float
    discharge: float
    interval: tuple[float, float]
    unit: str

    def __post_init__(self):
        if self.charge < 0 or self.discharge < 0:
            raise ValueError("accumulated charge/discharge must be non-negative")

    @property
    def net(self) -> float:
        return self.charge - self.discharge


def _interval(series: TimeSeries, interval) -> tuple[float, float]:
    if len(series) < 2:
        raise EmptyInterval("need at least two samples")
    t0, t1 = series.span
    a, b = (t0, t1) if interval is None else (float(interval[0]), float(interval[1]))
    a, b = max(a, t0), min(b, t1)
    if not b > a:
        raise EmptyInterval(f"interval [{a}, {b}] is empty within the series span")
    return a, b


def accumulate_capacity(series: TimeSeries, interval=None, *, gap_threshold=DEFAULT_GAP_THRESHOLD, gap_policy="exclude") -> AccumulationResult:
    a, b = _interval(series, interval)
    tp = binned_throughput(series.t, series.current, None, np.array([a, b]), gap_threshold=gap_threshold, gap_policy=gap_policy)
    return AccumulationResult(float(tp.c_chg[0]), float(tp.c_dis[0]), (a, b), "Ah")


def accumulate_energy(series: TimeSeries, interval=None, *, gap_threshold=DEFAULT_GAP_THRESHOLD, gap_policy="exclude") -> AccumulationResult:
    a, b = _interval(series, interval)
    tp = binned_throughput(series.t, series.current, series.v_total, np.array([a, b]), gap_threshold=gap_threshold, gap_policy=gap_policy)
    return AccumulationResult(float(tp.e_chg[0]), float(tp.e_dis[0]), (a, b), "kWh")


def loss_rate(chg: float, dis: float) -> float:
    """Percent of the charged quantity that was not discharged again."""
    if not chg > 0:
        raise ZeroCharge(f"loss rate undefined for charge {chg}")
    # the clamp only absorbs rounding when dis == 0
    return min(100.0, 100.0 * (chg - dis) / chg)


def cycle_count(dis: float, spec: BatterySystemSpec = BatterySystemSpec()) -> float:
    """Equivalent full cycles: discharged Ah over nominal capacity."""
    return dis / spec.nominal_capacity


def fluctuation(mean: float, std: float) -> float:
    if mean == 0 or not math.isfinite(mean):
        raise ValueError("fluctuation undefined for zero mean")
    return 100.0 * std / abs(mean)
