"""Per-day accounting, the annual usage table and the day x phase voltage matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .. import patterns
from ..core import (
    DEFAULT_TZ_OFFSET_HOURS,
    BatterySystemSpec,
    DailySummary,
    OperationPattern,
    SolarLevel,
    TimeSeries,
    day_index_to_date,
    day_start_utc,
    local_day_index,
)
from .distributions import temp_spreads
from .integrate import DEFAULT_GAP_THRESHOLD, binned_throughput, cycle_count, loss_rate


def _day_groups(series: TimeSeries, tz_offset_hours: float):
    """(day_index, lo, hi) for each local day that has samples; series is sorted."""
    days = local_day_index(series.t, tz_offset_hours)
    starts = np.flatnonzero(np.r_[True, days[1:] != days[:-1]])
    ends = np.r_[starts[1:], len(days)]
    return days[starts], starts, ends


def daily_summaries(
    series: TimeSeries,
    spec: BatterySystemSpec = BatterySystemSpec(),
    *,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
    gap_threshold: float = DEFAULT_GAP_THRESHOLD,
    gap_policy: str = "exclude",
    rule: "patterns.PatternRule | None" = None,
    classify: bool = True,
) -> list[DailySummary]:
    """One summary per local calendar day with samples, ordered by date.

    Sample intervals crossing local midnight are split there, so the daily
    values add up to the whole-series totals.
    """
    if not len(series):
        return []
    rule = rule or patterns.PatternRule.for_capacity(spec.nominal_capacity, gap_threshold=gap_threshold)
    day_ids, lo, hi = _day_groups(series, tz_offset_hours)
    first, last = int(day_ids[0]), int(day_ids[-1])
    edges = day_start_utc(np.arange(first, last + 2), tz_offset_hours)
    tp = binned_throughput(
        series.t, series.current, series.v_total, edges, gap_threshold=gap_threshold, gap_policy=gap_policy
    )
    spread = temp_spreads(series)
    dt_max = np.maximum.reduceat(spread, lo) if len(lo) else np.empty(0)

    out = []
    for k, (d, a, b) in enumerate(zip(day_ids.tolist(), lo.tolist(), hi.tolist())):
        j = d - first
        fields = dict(
            date=day_index_to_date(d),
            c_chg=float(tp.c_chg[j]),
            c_dis=float(tp.c_dis[j]),
            e_chg=float(tp.e_chg[j]),
            e_dis=float(tp.e_dis[j]),
            dt_max=float(dt_max[k]),
            n_samples=b - a,
        )
        if classify:
            c = patterns.classify_day(series.slice(a, b), rule, spec, tz_offset_hours)
            fields.update(pattern=c.pattern, generator_on=c.generator_on, solar_level=c.solar_level)
        out.append(DailySummary(**fields))
    return out


@dataclass(frozen=True)
class AnnualRow:
    label: str
    c_chg: float  # Ah
    c_dis: float
    cr_loss: float | None  # percent
    cycles: float
    e_chg: float  # kWh
    e_dis: float
    er_loss: float | None

    def as_dict(self) -> dict:
        return {
            "interval": self.label,
            "c_chg_Ah": self.c_chg,
            "c_dis_Ah": self.c_dis,
            "cr_loss_pct": self.cr_loss,
            "cycles": self.cycles,
            "e_chg_kWh": self.e_chg,
            "e_dis_kWh": self.e_dis,
            "er_loss_pct": self.er_loss,
        }


def annual_row(label: str, c_chg: float, c_dis: float, e_chg: float, e_dis: float, spec: BatterySystemSpec = BatterySystemSpec()) -> AnnualRow:
    return AnnualRow(
        label=label,
        c_chg=c_chg,
        c_dis=c_dis,
        cr_loss=loss_rate(c_chg, c_dis) if c_chg > 0 else None,
        cycles=cycle_count(c_dis, spec),
        e_chg=e_chg,
        e_dis=e_dis,
        er_loss=loss_rate(e_chg, e_dis) if e_chg > 0 else None,
    )


def _label(first: date, last: date, lo: date, hi: date) -> str:
    """'2017' for a full interval, '2016-10-14 ~ 12-31' for a partial one."""
    if first == lo and last == hi and lo.month == 1 and lo.day == 1 and hi.month == 12 and hi.day == 31 and lo.year == hi.year:
        return str(lo.year)
    tail = last.strftime("%m-%d") if last.year == first.year else last.isoformat()
    return f"{first.isoformat()} ~ {tail}"


def annual_report(
    summaries: Sequence[DailySummary],
    spec: BatterySystemSpec = BatterySystemSpec(),
    year_boundaries: Sequence[date] | None = None,
) -> list[AnnualRow]:
    """Usage per interval plus an 'All time' row.

    ``year_boundaries`` are the start dates of consecutive intervals; by
    default every calendar year. Intervals without days are omitted.
    """
    if not summaries:
        raise ValueError("annual_report needs at least one daily summary")
    days = sorted(summaries, key=lambda s: s.date)
    if year_boundaries is None:
        years = range(days[0].date.year, days[-1].date.year + 1)
        bounds = [date(y, 1, 1) for y in years] + [date(days[-1].date.year + 1, 1, 1)]
    else:
        bounds = sorted(year_boundaries)
        if bounds[-1] <= days[-1].date:
            bounds.append(date.fromordinal(days[-1].date.toordinal() + 1))
    rows = []
    for lo, nxt in zip(bounds[:-1], bounds[1:]):
        chunk = [s for s in days if lo <= s.date < nxt]
        if not chunk:
            continue
        hi = date.fromordinal(nxt.toordinal() - 1)
        rows.append(
            annual_row(
                _label(chunk[0].date, chunk[-1].date, lo, hi),
                math.fsum(s.c_chg for s in chunk),
                math.fsum(s.c_dis for s in chunk),
                math.fsum(s.e_chg for s in chunk),
                math.fsum(s.e_dis for s in chunk),
                spec,
            )
        )
    rows.append(
        annual_row(
            "All time",
            math.fsum(s.c_chg for s in days),
            math.fsum(s.c_dis for s in days),
            math.fsum(s.e_chg for s in days),
            math.fsum(s.e_dis for s in days),
            spec,
        )
    )
    return rows


def day_phase_matrix(
    series: TimeSeries, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS, n_phase: int = 96
) -> tuple[list[date], np.ndarray]:
    """Mean total voltage per (local day, phase bin); NaN where a bin is empty."""
    if not len(series):
        return [], np.empty((0, n_phase))
    local = series.t + tz_offset_hours * 3600.0
    days = np.floor(local / 86400.0).astype(np.int64)
    phase = ((local - days * 86400.0) * (n_phase / 86400.0)).astype(np.int64)
    np.clip(phase, 0, n_phase - 1, out=phase)
    uniq, row = np.unique(days, return_inverse=True)
    flat = row * n_phase + phase
    size = len(uniq) * n_phase
    n = np.bincount(flat, minlength=size)
    s = np.bincount(flat, weights=series.v_total, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n > 0, s / np.maximum(n, 1), np.nan)
    return [day_index_to_date(int(d)) for d in uniq], mean.reshape(len(uniq), n_phase)


def pattern_counts(summaries: Sequence[DailySummary]) -> dict[str, int]:
    counts = {p.value: 0 for p in OperationPattern}
    for s in summaries:
        counts[s.pattern.value] += 1
    return counts

