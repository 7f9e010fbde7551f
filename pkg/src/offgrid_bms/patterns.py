"""Rule-based daily operation-pattern classification.

Each day is placed in a grid of solar-input level (High/Medium/Low) by
generator activity (ON/OFF):

    ============  =============  ============
                  generator OFF  generator ON
    ============  =============  ============
    High solar    P1             unclassified
    Medium solar  P2             P3
    Low solar     unclassified   P4
    ============  =============  ============

A generator shows up as a sustained, nearly constant charge current;
solar charging fluctuates. Numeric thresholds are artifact defaults and
are exposed through :class:`PatternRule`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    DEFAULT_TZ_OFFSET_HOURS,
    BatterySystemSpec,
    OperationPattern,
    SolarLevel,
    TimeSeries,
    day_start_utc,
    local_day_index,
)
from .metrics.integrate import DEFAULT_GAP_THRESHOLD, binned_throughput

REFERENCE_CAPACITY = 250.0  # Ah; solar thresholds are quoted for this pack size


@dataclass(frozen=True)
class PatternRule:
    solar_high_min: float = 60.0  # Ah, inclusive
    solar_low_max: float = 20.0  # Ah, exclusive
    gen_min_current_frac: float = 0.04  # 1/h, fraction of nominal capacity
    gen_min_duration: float = 1800.0  # s
    gen_max_rel_std: float = 5.0  # percent
    daylight_window: tuple[float, float] = (9.0, 17.0)  # local hours
    min_samples: int = 100
    gap_threshold: float = DEFAULT_GAP_THRESHOLD

    def __post_init__(self):
        if not self.solar_low_max < self.solar_high_min:
            raise ValueError("solar_low_max must be below solar_high_min")
        if not self.gen_min_duration > 0:
            raise ValueError("gen_min_duration must be positive")
        if not 0 <= self.daylight_window[0] < self.daylight_window[1] <= 24:
            raise ValueError("daylight_window must be an increasing pair of hours in [0, 24]")

    @classmethod
    def for_capacity(cls, nominal_capacity: float, **overrides) -> "PatternRule":
        """Defaults with the solar thresholds scaled from a 250 Ah pack."""
        k = nominal_capacity / REFERENCE_CAPACITY
        base = cls()
        fields_ = {"solar_high_min": base.solar_high_min * k, "solar_low_max": base.solar_low_max * k}
        fields_.update(overrides)  # explicit values are taken as given, not scaled
        return replace(base, **fields_)


@dataclass(frozen=True)
class GeneratorSegment:
    start: float
    end: float
    mean_current: float
    relative_std: float  # percent

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("segment end must follow its start")
        if not self.mean_current > 0:
            raise ValueError("generator segments carry charge current")


@dataclass(frozen=True)
class DayClassification:
    pattern: OperationPattern
    generator_on: bool
    solar_level: SolarLevel
    solar_ah: float
    segments: tuple[GeneratorSegment, ...] = field(default=())


_GRID = {
    (SolarLevel.HIGH, False): OperationPattern.P1,
    (SolarLevel.MEDIUM, False): OperationPattern.P2,
    (SolarLevel.MEDIUM, True): OperationPattern.P3,
    (SolarLevel.LOW, True): OperationPattern.P4,
    (SolarLevel.HIGH, True): OperationPattern.UNCLASSIFIED,
    (SolarLevel.LOW, False): OperationPattern.UNCLASSIFIED,
}


def pattern_for(level: SolarLevel, generator_on: bool) -> OperationPattern:
    return _GRID[(SolarLevel(level), bool(generator_on))]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of True runs."""
    if not mask.any():
        return []
    d = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def detect_generator(
    day: TimeSeries, rule: PatternRule = PatternRule(), spec: BatterySystemSpec = BatterySystemSpec()
) -> tuple[bool, list[GeneratorSegment]]:
    """Find sustained near-constant charge blocks.

    A window qualifies when it lasts at least ``gen_min_duration``, lies in an
    unbroken charge run, and has mean current >= ``gen_min_current_frac * Cap_N``
    with relative std <= ``gen_max_rel_std``. Overlapping qualifying windows are
    merged into segments.
    """
    t, cur = day.t, day.current
    if len(t) < 2:
        return False, []
    threshold = rule.gen_min_current_frac * spec.nominal_capacity
    max_rel = rule.gen_max_rel_std / 100.0

    # charge runs, broken at data holes
    charging = cur > 0
    hole = np.zeros(len(t), dtype=bool)
    hole[1:] = np.diff(t) > rule.gap_threshold
    segments = []
    for s, e in _runs(charging):
        cuts = [s, *(np.flatnonzero(hole[s + 1 : e + 1]) + s + 1).tolist(), e + 1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            segments.extend(_flat_blocks(t[a:b], cur[a:b], rule.gen_min_duration, threshold, max_rel))
    return bool(segments), segments


def _flat_blocks(t, x, min_duration, threshold, max_rel) -> list[GeneratorSegment]:
    n = len(t)
    if n < 2 or t[-1] - t[0] < min_duration:
        return []
    xc = x - x.mean()
    c1 = np.concatenate(([0.0], np.cumsum(xc)))
    c2 = np.concatenate(([0.0], np.cumsum(xc * xc)))
    start = np.arange(n)
    end = np.searchsorted(t, t + min_duration, side="left")
    ok = end < n
    start, end = start[ok], end[ok]
    m = end - start + 1
    s1 = c1[end + 1] - c1[start]
    s2 = c2[end + 1] - c2[start]
    mean_c = s1 / m
    mean = mean_c + x.mean()
    var = np.maximum(s2 / m - mean_c**2, 0.0)
    good = (mean >= threshold) & (np.sqrt(var) <= max_rel * mean)
    if not good.any():
        return []
    cover = np.zeros(n + 1, dtype=np.int64)
    np.add.at(cover, start[good], 1)
    np.add.at(cover, end[good] + 1, -1)
    covered = np.cumsum(cover[:n]) > 0
    out = []
    for a, b in _runs(covered):
        seg = x[a : b + 1]
        mu = float(seg.mean())
        out.append(GeneratorSegment(float(t[a]), float(t[b]), mu, 100.0 * float(seg.std()) / mu))
    return out


def _day_start(day: TimeSeries, tz_offset_hours: float) -> float:
    return float(day_start_utc(local_day_index(day.t[0], tz_offset_hours), tz_offset_hours))


def solar_level(
    day: TimeSeries,
    rule: PatternRule = PatternRule(),
    spec: BatterySystemSpec = BatterySystemSpec(),
    segments: list[GeneratorSegment] | None = None,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> tuple[SolarLevel, float]:
    """Daylight charge (Ah) with generator blocks cut out, and its level."""
    if segments is None:
        _, segments = detect_generator(day, rule, spec)
    solar_ah = 0.0
    if len(day) >= 2:
        d0 = _day_start(day, tz_offset_hours)
        w0 = d0 + rule.daylight_window[0] * 3600.0
        w1 = d0 + rule.daylight_window[1] * 3600.0
        cuts = [w0, w1]
        for seg in segments:
            cuts += [min(max(seg.start, w0), w1), min(max(seg.end, w0), w1)]
        edges = np.unique(cuts)
        tp = binned_throughput(day.t, day.current, None, edges, gap_threshold=rule.gap_threshold)
        mids = 0.5 * (edges[:-1] + edges[1:])
        keep = np.ones(len(mids), dtype=bool)
        for seg in segments:
            keep &= ~((mids >= seg.start) & (mids <= seg.end))
        solar_ah = float(math.fsum(tp.c_chg[keep]))
    if solar_ah >= rule.solar_high_min:
        level = SolarLevel.HIGH
    elif solar_ah < rule.solar_low_max:
        level = SolarLevel.LOW
    else:
        level = SolarLevel.MEDIUM
    return level, solar_ah


def classify_day(
    day: TimeSeries,
    rule: PatternRule = PatternRule(),
    spec: BatterySystemSpec = BatterySystemSpec(),
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> DayClassification:
    gen_on, segments = detect_generator(day, rule, spec)
    level, solar_ah = solar_level(day, rule, spec, segments, tz_offset_hours)
    if len(day) < rule.min_samples:
        pattern = OperationPattern.UNCLASSIFIED
    else:
        pattern = pattern_for(level, gen_on)
    return DayClassification(pattern, gen_on, level, solar_ah, tuple(segments))
