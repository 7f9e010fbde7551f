"""Synthetic BMS telemetry with exact ground truth.

A day is described by a continuous battery-current profile (night load,
solar bump with optional drop events and flicker, optional flat generator
block). Pack voltage follows a resistance-only equivalent circuit with SOC
from coulomb counting. Ground-truth throughput is integrated on a fine grid
(10 ms by default) and samples are taken from that same grid at the BMS
cadence, then quantised as a BMS would log them.

Randomness: numpy ``Generator(PCG64(SeedSequence([seed, day_ordinal])))``,
so each day is reproducible on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DEFAULT_TZ_OFFSET_HOURS,
    N_CELLS,
    N_TEMPS,
    BatterySystemSpec,
    OperationPattern,
    SampleBatch,
    SolarLevel,
    TelemetryError,
    date_to_day_index,
    day_start_utc,
)

SCENARIO_PATTERNS = ("P1", "P2", "P3", "P4", "HighSolarGenOn", "LowSolarGenOff")

SUNRISE_H, SUNSET_H = 9.0, 17.0

# per-pattern defaults: (night load A, net solar peak A, drop-event coverage, generator window h)
PATTERN_DEFAULTS = {
    "P1": (5.0, 20.0, 0.0, None),
    "P2": (1.5, 9.0, 0.5, None),
    "P3": (4.5, 12.0, 0.5, (16.75, 19.0)),
    "P4": (5.0, 0.0, 0.0, (12.0, 17.0)),
    "HighSolarGenOn": (7.0, 20.0, 0.0, (17.5, 19.0)),
    "LowSolarGenOff": (0.55, 2.5, 0.0, None),
}

EXPECTED_LABELS = {
    "P1": (OperationPattern.P1, SolarLevel.HIGH, False),
    "P2": (OperationPattern.P2, SolarLevel.MEDIUM, False),
    "P3": (OperationPattern.P3, SolarLevel.MEDIUM, True),
    "P4": (OperationPattern.P4, SolarLevel.LOW, True),
    "HighSolarGenOn": (OperationPattern.UNCLASSIFIED, SolarLevel.HIGH, True),
    "LowSolarGenOff": (OperationPattern.UNCLASSIFIED, SolarLevel.LOW, False),
}

DEFAULT_MIX = {"P1": 0.40, "P2": 0.20, "P3": 0.15, "P4": 0.10, "HighSolarGenOn": 0.075, "LowSolarGenOff": 0.075}


class SocOutOfRange(TelemetryError):
    pass


# LFP-style open-circuit curve: flat plateau between steep ends
OCV_SOC = np.array([0.0, 0.05, 0.10, 0.20, 0.50, 0.80, 0.95, 1.00])
OCV_CELL = np.array([2.50, 2.90, 3.20, 3.25, 3.29, 3.33, 3.35, 3.60])


@dataclass(frozen=True)
class EcmParams:
    r_cell: float = 0.05  # ohm per cell; sized for a 10-15 % daily energy loss
    series_count: int = 16
    parallel_count: int = 5


def ocv_cell(soc):
    return np.interp(soc, OCV_SOC, OCV_CELL)


def ecm_voltage(soc, current, params: EcmParams = EcmParams()):
    """Pack voltage of a resistance-only equivalent circuit."""
    soc_arr = np.asarray(soc, dtype=np.float64)
    if np.any((soc_arr < 0) | (soc_arr > 1)) or np.any(np.isnan(soc_arr)):
        raise SocOutOfRange("soc must lie in [0, 1]")
    v = _pack_voltage(soc_arr, np.asarray(current, dtype=np.float64), params)
    return float(v) if np.ndim(v) == 0 else v


def _pack_voltage(soc, current, params):
    return params.series_count * (ocv_cell(soc) + current * (params.r_cell / params.parallel_count))


@dataclass(frozen=True)
class DayScenario:
    pattern: str = "P1"
    date: date = date(2017, 1, 1)
    night_discharge_current: float | None = None  # A; None -> pattern default
    solar_peak_current: float | None = None  # A, net charge at the top of the undisturbed bump
    solar_jitter: float | None = None  # expected fraction of daylight covered by drop events
    solar_flicker: float = 0.12  # relative std of minute-scale PV fluctuation
    generator_current: float = 18.0
    generator_window: tuple[float, float] | None = None  # local hours
    cadence: float = 15.0
    seed: int = 0
    soc0: float = 0.5
    temp_spread: float = 4.0  # degC, upper bound on max - min sensor temperature
    load_spikes_per_day: float = 3.0
    ecm: EcmParams = field(default_factory=EcmParams)

    def __post_init__(self):
        if self.pattern not in SCENARIO_PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if not self.cadence > 0:
            raise ValueError("cadence must be positive")
        for name in ("night_discharge_current", "solar_peak_current", "generator_current"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.soc0 <= 1:
            raise ValueError("soc0 must lie in [0, 1]")

    def resolved(self) -> "DayScenario":
        night, peak, jitter, window = PATTERN_DEFAULTS[self.pattern]
        return replace(
            self,
            night_discharge_current=night if self.night_discharge_current is None else self.night_discharge_current,
            solar_peak_current=peak if self.solar_peak_current is None else self.solar_peak_current,
            solar_jitter=jitter if self.solar_jitter is None else self.solar_jitter,
            generator_window=window if self.generator_window is None else self.generator_window,
        )

    @property
    def generator_on(self) -> bool:
        return self.resolved().generator_window is not None


@dataclass(frozen=True)
class GroundTruth:
    date: date
    scenario: str
    pattern: OperationPattern
    solar_level: SolarLevel
    generator_on: bool
    c_chg: float  # Ah
    c_dis: float
    e_chg: float  # kWh
    e_dis: float
    drift_rate: float = 0.0  # s/day
    n_samples: int = 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(date=self.date.isoformat(), pattern=self.pattern.value, solar_level=self.solar_level.value)
        return d


def _raised_cosine_events(rng, rate_per_s, t_lo, t_hi, dur_lo, dur_hi, amp_lo, amp_hi):
    n = rng.poisson(rate_per_s * (t_hi - t_lo)) if rate_per_s > 0 else 0
    starts = np.sort(rng.uniform(t_lo, t_hi, n))
    durs = rng.uniform(dur_lo, dur_hi, n)
    amps = rng.uniform(amp_lo, amp_hi, n)
    return list(zip(starts.tolist(), durs.tolist(), amps.tolist()))


def _bump(tt, start, dur):
    x = (tt - start) / dur
    return np.where((x > 0) & (x < 1), 0.5 * (1 - np.cos(2 * np.pi * np.clip(x, 0, 1))), 0.0)


def _span(tt, lo, hi):
    """Index slice of the sorted grid ``tt`` inside [lo, hi]."""
    return slice(int(np.searchsorted(tt, lo, "left")), int(np.searchsorted(tt, hi, "right")))


class _Profile:
    """Continuous battery-current profile of one day, t in seconds after local midnight."""

    RAMP = 60.0  # s, generator switch-on/off ramp

    def __init__(self, sc: DayScenario, rng: np.random.Generator):
        self.sc = sc
        rise, set_ = SUNRISE_H * 3600, SUNSET_H * 3600
        self.rise, self.set = rise, set_
        self.gross_peak = sc.solar_peak_current + sc.night_discharge_current
        mean_dip = 450.0
        self.dips = _raised_cosine_events(rng, sc.solar_jitter / mean_dip, rise, set_, 180, 720, 0.3, 0.9)
        self.spikes = _raised_cosine_events(rng, sc.load_spikes_per_day / 86400, 0, 86400, 120, 360, 1.5, 4.5)
        self.knot_t = np.arange(0.0, 86400.0 + 60.0, 60.0)
        self.knot_v = np.clip(rng.normal(0, sc.solar_flicker, len(self.knot_t)), -3 * sc.solar_flicker, 3 * sc.solar_flicker)
        self.gen = None if sc.generator_window is None else (sc.generator_window[0] * 3600, sc.generator_window[1] * 3600)

    def generator_weight(self, tt):
        if self.gen is None:
            return np.zeros_like(tt)
        g0, g1 = self.gen
        up = np.clip((tt - g0) / self.RAMP, 0, 1)
        down = np.clip((g1 - tt) / self.RAMP, 0, 1)
        return np.minimum(up, down)

    def current(self, tt):
        sc = self.sc
        gross = np.zeros_like(tt)
        day = _span(tt, self.rise, self.set)
        td = tt[day]
        if len(td):
            sun = np.clip(np.sin(np.pi * (td - self.rise) / (self.set - self.rise)), 0, None)
            gross[day] = self.gross_peak * sun * (1 + np.interp(td, self.knot_t, self.knot_v))
            for s, d, depth in self.dips:
                k = _span(tt, max(s, self.rise), min(s + d, self.set))
                if k.stop > k.start:
                    gross[k] *= 1 - depth * _bump(tt[k], s, d)
        i = gross - sc.night_discharge_current
        for s, d, amp in self.spikes:
            k = _span(tt, s, s + d)
            if k.stop > k.start:
                i[k] -= amp * _bump(tt[k], s, d)
        if self.gen is not None:
            k = _span(tt, self.gen[0], self.gen[1])
            if k.stop > k.start:
                w = self.generator_weight(tt[k])
                i[k] = (1 - w) * i[k] + w * sc.generator_current
        return i


def _quantize(x, decimals):
    return np.round(x, decimals)


def generate_day(scenario: DayScenario, *, truth_dt: float = 0.01, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS) -> tuple[SampleBatch, GroundTruth]:
    """Samples for one local day (true UTC time) and their ground truth.

    Throughput truth is a left Riemann sum of the continuous profile with
    step ``truth_dt``; samples are taken from the same grid every ``cadence``.
    """
    sc = scenario.resolved()
    step = sc.cadence / truth_dt
    if abs(step - round(step)) > 1e-9 or round(step) < 1:
        raise ValueError("cadence must be an integer multiple of truth_dt")
    step = int(round(step))
    ordinal = date_to_day_index(sc.date)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([sc.seed, ordinal])))
    prof = _Profile(sc, rng)
    cap = BatterySystemSpec(series_count=sc.ecm.series_count, parallel_count=sc.ecm.parallel_count).nominal_capacity

    n_fine = int(round(86400 / truth_dt))
    chunk = step * max(1, int(round(3600 / sc.cadence)))  # one hour, aligned to samples
    c_chg = c_dis = e_chg = e_dis = 0.0
    soc = sc.soc0
    samp_t, samp_i, samp_soc = [], [], []
    for k0 in range(0, n_fine, chunk):
        k1 = min(n_fine, k0 + chunk)
        tt = np.arange(k0, k1) * truth_dt
        i = prof.current(tt)
        # soc at each fine point integrates current up to that point
        cum = np.cumsum(i) * (truth_dt / 3600.0 / cap)
        soc_pts = np.clip(soc + np.concatenate(([0.0], cum[:-1])), 0.0, 1.0)
        v = _pack_voltage(soc_pts, i, sc.ecm)
        p = i * v
        c_chg += float(np.sum(i, where=i > 0)) * truth_dt
        c_dis -= float(np.sum(i, where=i < 0)) * truth_dt
        e_chg += float(np.sum(p, where=p > 0)) * truth_dt
        e_dis -= float(np.sum(p, where=p < 0)) * truth_dt
        soc = float(np.clip(soc + cum[-1], 0.0, 1.0))
        sel = slice((-k0) % step, None, step)
        samp_t.append(tt[sel])
        samp_i.append(i[sel])
        samp_soc.append(soc_pts[sel])

    t_local = np.concatenate(samp_t)
    cur = np.concatenate(samp_i)
    soc_s = np.concatenate(samp_soc)
    n = len(t_local)

    # generator ripple is measurement-level noise on the regulated block
    w = prof.generator_weight(t_local)
    cur = cur + np.where(w >= 1, rng.uniform(-0.2, 0.2, n), 0.0)
    v_total = ecm_voltage(soc_s, cur, sc.ecm)
    cell_offset = rng.uniform(-0.004, 0.004, N_CELLS)
    v_cell = v_total[:, None] / sc.ecm.series_count + cell_offset[None, :] + rng.uniform(-0.001, 0.001, (n, N_CELLS))

    doy = sc.date.timetuple().tm_yday
    base = 12.0 + 7.0 * math.sin(2 * math.pi * (doy - 110) / 365.0) + 1.5 * np.sin(2 * np.pi * (t_local / 3600.0 - 9.0) / 24.0)
    offsets = sc.temp_spread * rng.uniform(0.0, 0.8, N_TEMPS)
    noise = sc.temp_spread * rng.uniform(-0.05, 0.05, (n, N_TEMPS))
    temp = base[:, None] + offsets[None, :] + noise

    t_utc = float(day_start_utc(ordinal, tz_offset_hours)) + t_local
    batch = SampleBatch(
        t=t_utc,
        v_total=_quantize(v_total, 2),
        v_cell=_quantize(v_cell, 3),
        current=_quantize(cur, 2),
        temp=_quantize(temp, 2),
        source=f"bms_{sc.date.isoformat()}.csv",
    )
    pattern, level, gen_on = EXPECTED_LABELS[sc.pattern]
    truth = GroundTruth(
        date=sc.date,
        scenario=sc.pattern,
        pattern=pattern,
        solar_level=level,
        generator_on=gen_on,
        c_chg=c_chg / 3600.0,
        c_dis=c_dis / 3600.0,
        e_chg=e_chg / 3.6e6,
        e_dis=e_dis / 3.6e6,
        n_samples=n,
    )
    return batch, truth


def inject_drift(t: np.ndarray, rate: float, t0: float) -> np.ndarray:
    """Clock readings of a clock gaining ``rate`` s/day, exact at ``t0``.

    This is the inverse of the affine correction fitted by ingest: with
    total shift S = raw_end - true_end, correcting these readings returns ``t``.
    """
    return t0 + (np.asarray(t, dtype=np.float64) - t0) * (1.0 + rate / 86400.0)


_CSV_HEADER = "time,V_tot," + ",".join(f"V{n:02d}" for n in range(1, N_CELLS + 1)) + ",I," + ",".join(f"T{n}" for n in range(1, N_TEMPS + 1)) + "\n"
_CSV_ROW = "%s,%.2f," + ",".join(["%.3f"] * N_CELLS) + ",%.2f," + ",".join(["%.2f"] * N_TEMPS) + "\n"


def format_times(t: np.ndarray) -> np.ndarray:
    ms = np.round(np.asarray(t) * 1000.0).astype(np.int64)
    unit = "ms" if np.any(ms % 1000) else "s"
    stamps = np.datetime_as_string(ms.astype("datetime64[ms]"), unit=unit)
    return np.char.replace(stamps, "T", " ")


def write_csv(path: str | Path, t: np.ndarray, batch: SampleBatch) -> None:
    """Write samples in the BMS CSV schema using timestamps ``t``."""
    n = len(batch)
    rows = np.empty((n, 23), dtype=object)
    rows[:, 0] = format_times(t)
    rows[:, 1] = batch.v_total
    rows[:, 2:18] = batch.v_cell.astype(np.float64)
    rows[:, 18] = batch.current
    rows[:, 19:23] = batch.temp.astype(np.float64)
    body = (_CSV_ROW * n) % tuple(rows.ravel().tolist()) if n else ""
    Path(path).write_text(_CSV_HEADER + body)


def mixed_scenarios(n_days: int, start: date = date(2016, 10, 14), seed: int = 0, mix: dict[str, float] | None = None, **overrides) -> list[DayScenario]:
    """Consecutive days with patterns drawn from ``mix``; every pattern appears when n_days >= 6."""
    mix = DEFAULT_MIX if mix is None else mix
    names = [p for p in SCENARIO_PATTERNS if mix.get(p, 0) > 0]
    if not names:
        raise ValueError("mix has no positive weights")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0x5C3])))
    weights = np.array([mix[p] for p in names], dtype=np.float64)
    drawn = list(rng.choice(names, size=max(0, n_days - len(names)), p=weights / weights.sum()))
    picks = (names + drawn) if n_days >= len(names) else list(rng.choice(names, size=n_days, p=weights / weights.sum()))
    rng.shuffle(picks)
    return [
        DayScenario(pattern=str(p), date=start + timedelta(days=k), seed=seed, **overrides)
        for k, p in enumerate(picks)
    ]


def generate_corpus(
    days: Sequence[DayScenario],
    drift_rate: float = 0.0,
    out_dir: str | Path | None = None,
    *,
    truth_dt: float = 0.01,
    tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS,
) -> tuple[list[Path], dict]:
    """Write one CSV per day with drifted clock readings, plus ``manifest.json``.

    Returns the file paths and the manifest. With ``out_dir=None`` nothing is
    written and the path list is empty.
    """
    if not days:
        raise ValueError("need at least one day")
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    t0 = None
    t_last = None
    paths, truths = [], []
    for sc in days:
        batch, truth = generate_day(sc, truth_dt=truth_dt, tz_offset_hours=tz_offset_hours)
        if t0 is None:
            t0 = float(batch.t[0])
        t_last = float(batch.t[-1])
        truth = replace(truth, drift_rate=drift_rate)
        truths.append(truth)
        if out is not None:
            path = out / batch.source
            write_csv(path, inject_drift(batch.t, drift_rate, t0), batch)
            paths.append(path)
    total_shift = (t_last - t0) * drift_rate / 86400.0
    manifest = {
        "drift_rate_s_per_day": drift_rate,
        "total_shift_s": total_shift,
        "true_start": t0,
        "true_end": t_last,
        "tz_offset_hours": tz_offset_hours,
        "truth_dt": truth_dt,
        "days": [dict(t.as_dict(), file=f"bms_{t.date.isoformat()}.csv") for t in truths],
    }
    if out is not None:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return paths, manifest


def load_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
