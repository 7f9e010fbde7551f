"""End-to-end steps shared by the CLI, scripts and tests."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from . import health
from .core import BatterySystemSpec, DailySummary, OperationPattern, ProbabilityHistogram, SolarLevel, TimeSeries
from .ingest import (
    DriftModel,
    DriftSearch,
    SpanTooShort,
    apply_drift_correction,
    estimate_drift,
    merge_series,
    periodicity_score,
    read_bms_files,
)
from .metrics import daily as daily_mod
from .metrics import distributions as dist
from .metrics.daily import AnnualRow

log = logging.getLogger(__name__)


@dataclass
class IngestResult:
    series: TimeSeries
    drift: DriftModel | None
    manifest: dict


def ingest(
    paths: Sequence[str | Path],
    *,
    flip_current: bool = False,
    workers: int = 1,
    drift: str | float = "auto",
    search: DriftSearch = DriftSearch(),
) -> IngestResult:
    """Parse, merge and clock-correct a set of daily files.

    ``drift`` is ``"auto"`` (search), ``"none"`` or a fixed total shift in seconds.
    """
    results, failures = read_bms_files(sorted(str(p) for p in paths), flip_current=flip_current, workers=workers)
    rejections = [r.as_dict() for res in results for r in res.rejections]
    series = merge_series([res.batch for res in results])
    del results
    manifest: dict = {
        "sources": [dict(p) for p in series.provenance],
        "failed_sources": failures,
        "rejections": rejections,
        "n_rejections": len(rejections),
        "n_rows": len(series),
        "flip_current": flip_current,
    }
    model = None
    if len(series) >= 2:
        t0, t1 = series.span
        if drift == "auto":
            try:
                model = estimate_drift(series, search)
            except SpanTooShort as exc:
                log.warning("drift search skipped: %s", exc)
                manifest["drift_note"] = str(exc)
        elif drift != "none":
            model = DriftModel(t0, t1, float(drift))
    if model is not None and model.total_shift != 0:
        manifest["periodicity_before"] = periodicity_score(series)
        series = apply_drift_correction(series, model)
        manifest["periodicity_after"] = periodicity_score(series)
    manifest["drift"] = None if model is None else model.as_dict()
    if len(series):
        manifest["start"], manifest["end"] = series.span
    return IngestResult(series, model, manifest)


@dataclass
class AnalysisBundle:
    summaries: list[DailySummary]
    annual: list[AnnualRow]
    histograms: dict[str, ProbabilityHistogram]
    delta_t: dict
    phase_days: list[date]
    phase_matrix: np.ndarray
    health: dict = field(default_factory=dict)


def _hist(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except dist.NoFiniteWeights:
        log.info("histogram %s skipped: no data", name)
        return None


def analyze(
    series: TimeSeries,
    spec: BatterySystemSpec = BatterySystemSpec(),
    *,
    rule=None,
    tz_offset_hours: float = 8.0,
    gap_threshold: float = 600.0,
    gap_policy: str = "exclude",
    year_boundaries: Sequence[date] | None = None,
) -> AnalysisBundle:
    if not len(series):
        raise ValueError("cannot analyze an empty series")
    summaries = daily_mod.daily_summaries(
        series, spec, tz_offset_hours=tz_offset_hours, gap_threshold=gap_threshold, gap_policy=gap_policy, rule=rule
    )
    annual = daily_mod.annual_report(summaries, spec, year_boundaries)
    tw = dict(gap_threshold=gap_threshold, gap_policy=gap_policy)
    spreads = dist.temp_spreads(series)
    specs = {
        "c_rate_charge": (dist.time_weighted_histogram, series, dist.charge_c_rate(spec), dist.C_RATE_EDGES),
        "c_rate_discharge": (dist.time_weighted_histogram, series, dist.discharge_c_rate(spec), dist.C_RATE_EDGES),
        "temp_max": (dist.time_weighted_histogram, series, dist.max_temperature, dist.TEMPERATURE_EDGES),
        "temp_min": (dist.time_weighted_histogram, series, dist.min_temperature, dist.TEMPERATURE_EDGES),
        "delta_t": (dist.time_weighted_histogram, series, lambda s: spreads, dist.DELTA_T_EDGES),
    }
    hists = {name: _hist(name, fn, *args, **tw) for name, (fn, *args) in specs.items()}
    daily_cols = {
        "daily_c_chg": ([s.c_chg for s in summaries], dist.DAILY_CAPACITY_EDGES),
        "daily_c_dis": ([s.c_dis for s in summaries], dist.DAILY_CAPACITY_EDGES),
        "daily_delta_c": ([s.delta_c for s in summaries], dist.DAILY_DELTA_C_EDGES),
        "daily_e_chg": ([s.e_chg for s in summaries], dist.DAILY_ENERGY_EDGES),
        "daily_e_dis": ([s.e_dis for s in summaries], dist.DAILY_ENERGY_EDGES),
        "daily_delta_e": ([s.delta_e for s in summaries], dist.DAILY_DELTA_E_EDGES),
    }
    for name, (values, edges) in daily_cols.items():
        hists[name] = _hist(name, dist.count_histogram, values, edges)
    hists = {k: v for k, v in hists.items() if v is not None}

    w = dist.holding_weights(series.t, gap_threshold, gap_policy)
    total_w = float(w.sum())
    limit = spec.max_cell_temp_spread
    daily_max = np.array([s.dt_max for s in summaries])
    delta_t = {
        "limit": limit,
        "max": float(spreads.max()),
        "mean_time_weighted": float(np.dot(w, spreads) / total_w) if total_w > 0 else None,
        "fraction_samples_within_limit": float(np.mean(spreads <= limit)),
        "fraction_time_within_limit": float(np.dot(w, spreads <= limit) / total_w) if total_w > 0 else None,
        "daily_max_mean": float(daily_max.mean()),
        "days_over_limit": int(np.sum(daily_max > limit)),
    }
    days, matrix = daily_mod.day_phase_matrix(series, tz_offset_hours)
    all_time = annual[-1]
    est = health.estimate_remaining_capacity(all_time.cycles)
    health_info = {
        "cycles": all_time.cycles,
        "remaining_capacity_pct": est.remaining,
        "beyond_reference": est.beyond_reference,
        "reference": {"cycle_life": health.FadeReference().cycle_life, "eol_capacity_pct": health.FadeReference().eol_capacity},
    }
    return AnalysisBundle(summaries, annual, hists, delta_t, days, matrix, health_info)


SUMMARY_COLUMNS = (
    "date", "c_chg_Ah", "c_dis_Ah", "delta_c_Ah", "e_chg_kWh", "e_dis_kWh", "delta_e_kWh",
    "dt_max_C", "pattern", "generator_on", "solar_level", "n_samples",
)


def summary_rows(summaries: Sequence[DailySummary]) -> list[tuple]:
    return [
        (
            s.date.isoformat(), s.c_chg, s.c_dis, s.delta_c, s.e_chg, s.e_dis, s.delta_e,
            s.dt_max, s.pattern.value, int(s.generator_on), s.solar_level.value, s.n_samples,
        )
        for s in summaries
    ]


def summaries_from_rows(rows: Sequence[dict]) -> list[DailySummary]:
    out = []
    for r in rows:
        out.append(
            DailySummary(
                date=date.fromisoformat(r["date"]),
                c_chg=float(r["c_chg_Ah"]),
                c_dis=float(r["c_dis_Ah"]),
                e_chg=float(r["e_chg_kWh"]),
                e_dis=float(r["e_dis_kWh"]),
                dt_max=float(r["dt_max_C"]) if r["dt_max_C"] else math.nan,
                pattern=OperationPattern(r["pattern"]),
                generator_on=r["generator_on"] == "1",
                solar_level=SolarLevel(r["solar_level"]),
                n_samples=int(r["n_samples"]),
            )
        )
    return out
