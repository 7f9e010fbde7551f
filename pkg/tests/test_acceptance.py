"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

from __future__ import annotations

import contextlib
import json
import subprocess
import sys
import textwrap
import time
from dataclasses import replace
from datetime import date

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, make_series
from oracles import ANNUAL_TABLE, SmoothProfile, exact_signed_areas, irregular_times
from offgrid_bms.config import DEFAULT_COST_SCENARIOS
from offgrid_bms.core import SolarLevel
from offgrid_bms.health import crossover_year, cumulative_cost_curve, estimate_remaining_capacity, FadeReference
from offgrid_bms.metrics import accumulate_capacity, accumulate_energy, cycle_count, loss_rate
from offgrid_bms import pipeline
from offgrid_bms.synth import DayScenario, generate_corpus, mixed_scenarios

HOUR = 3600.0


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS/FAIL for a criterion; ``notes`` collects measured values."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        detail = "; ".join(notes + [f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"])
        ACCEPTANCE_LINES.append(f"[{number}] FAIL  {title} ({detail})")
        raise
    ACCEPTANCE_LINES.append(f"[{number}] PASS  {title} ({'; '.join(notes)})")


def test_criterion_1_loss_rates_and_cycles():
    with criterion(1, "annual loss rates and cycle counts") as notes:
        t0 = time.perf_counter()
        worst = 0.0
        for _, c_chg, c_dis, cr, cycles, e_chg, e_dis, er in ANNUAL_TABLE:
            for got, want in ((loss_rate(c_chg, c_dis), cr), (loss_rate(e_chg, e_dis), er), (cycle_count(c_dis), cycles)):
                worst = max(worst, abs(got - want))
        elapsed = time.perf_counter() - t0
        notes += [f"max |error| {worst:.3f}", f"{elapsed * 1e3:.1f} ms"]
        assert worst <= 0.05
        assert elapsed < 1.0


def test_criterion_2_cost_endpoints():
    with criterion(2, "cost model endpoints and crossover years") as notes:
        t0 = time.perf_counter()
        lead, li = DEFAULT_COST_SCENARIOS
        high = cumulative_cost_curve(li)
        low = cumulative_cost_curve(replace(li, battery_price=500.0))
        on = crossover_year(cumulative_cost_curve(lead), high).year
        off = crossover_year(*(cumulative_cost_curve(replace(s, include_moving=False)) for s in (lead, li))).year
        elapsed = time.perf_counter() - t0
        notes += [f"Li-ion flat {high.cost(1):.0f}/{low.cost(1):.0f}", f"crossover {on} (moving) / {off} (no moving)", f"{elapsed * 1e3:.1f} ms"]
        assert {c for _, c in high.points} == {232000.0}
        assert {c for _, c in low.points} == {82000.0}
        assert (on, off) == (3, 9)
        assert elapsed < 1.0


def _riemann_both(cur, volt, duration, step=0.01, chunk=1_000_000):
    """10 ms left Riemann sums of I+, I-, P+, P- (A s and W s)."""
    n = int(round(duration / step))
    acc = np.zeros(4)
    for lo in range(0, n, chunk):
        x = np.arange(lo, min(n, lo + chunk)) * step
        i = cur(x)
        p = i * volt(x)
        acc += [np.maximum(i, 0).sum(), np.maximum(-i, 0).sum(), np.maximum(p, 0).sum(), np.maximum(-p, 0).sum()]
    return acc * step


def test_criterion_3_trapezoid_oracle():
    with criterion(3, "trapezoid vs 10 ms Riemann oracle") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        duration = 2 * HOUR
        worst_smooth = 0.0
        for _ in range(50):
            cur = SmoothProfile(rng, (-3.0, 3.0), (3.0, 8.0))
            volt = SmoothProfile(rng, (50.0, 54.0), (0.2, 1.0))
            t = irregular_times(rng, duration)
            s = make_series(t, cur(t), v_total=volt(t))
            cap, en = accumulate_capacity(s), accumulate_energy(s)
            got = np.array([cap.charge * HOUR, cap.discharge * HOUR, en.charge * 3.6e6, en.discharge * 3.6e6])
            want = _riemann_both(cur, volt, duration)
            worst_smooth = max(worst_smooth, float(np.max(np.abs(got - want) / want)))
        worst_linear = 0.0
        for _ in range(50):
            n = int(rng.integers(2, 60))
            t = np.concatenate(([0.0], np.cumsum(rng.uniform(1.0, 600.0, n))))
            i = rng.uniform(-30.0, 30.0, n + 1)
            v = float(rng.uniform(48.0, 56.0))  # constant voltage keeps power piecewise linear
            s = make_series(t, i, v_total=v)
            cap, en = accumulate_capacity(s), accumulate_energy(s)
            for got, exact in (
                ((cap.charge * HOUR, cap.discharge * HOUR), exact_signed_areas(t, i)),
                ((en.charge * 3.6e6, en.discharge * 3.6e6), exact_signed_areas(t, i * v)),
            ):
                for g, e in zip(got, exact):
                    worst_linear = max(worst_linear, abs(g - float(e)) / max(abs(float(e)), 1e-300))
        elapsed = time.perf_counter() - t0
        notes += [f"smooth max rel {worst_smooth:.2e}", f"piecewise-linear max rel {worst_linear:.1e}", f"{elapsed:.1f} s"]
        assert worst_smooth <= 1e-3
        assert worst_linear <= 1e-12
        assert elapsed < 30.0


DRIFT_RATE = 10.9  # s/day


@pytest.fixture(scope="module")
def round_trip(tmp_path_factory):
    """200-day corpus (10 ms truth) with injected drift, through ingest and analyze."""
    out = tmp_path_factory.mktemp("corpus200")
    t0 = time.perf_counter()
    paths, manifest = generate_corpus(mixed_scenarios(200, seed=11), DRIFT_RATE, out, truth_dt=0.01)
    t_gen = time.perf_counter() - t0
    t0 = time.perf_counter()
    res = pipeline.ingest(paths)
    bundle = pipeline.analyze(res.series)
    t_pipe = time.perf_counter() - t0
    return dict(manifest=manifest, ingest=res, bundle=bundle, t_gen=t_gen, t_pipe=t_pipe)


def test_criterion_4_pipeline_round_trip(round_trip):
    with criterion(4, "200-day pipeline round trip") as notes:
        manifest, res, bundle = round_trip["manifest"], round_trip["ingest"], round_trip["bundle"]
        rate = res.drift.rate
        by_date = {s.date: s for s in bundle.summaries}
        worst = 0.0
        wrong = []
        cells = set()
        for d in manifest["days"]:
            s = by_date[date.fromisoformat(d["date"])]
            for key in ("c_chg", "c_dis", "e_chg", "e_dis"):
                worst = max(worst, abs(getattr(s, key) - d[key]) / d[key])
            cells.add((d["solar_level"], d["generator_on"]))
            if (s.pattern.value, s.solar_level.value, s.generator_on) != (d["pattern"], d["solar_level"], d["generator_on"]):
                wrong.append(d["date"])
        accuracy = 1.0 - len(wrong) / len(manifest["days"])
        notes += [
            f"drift {rate:.2f} s/day (true {DRIFT_RATE})",
            f"max rel error {worst:.2e}",
            f"accuracy {accuracy:.1%} over {len(cells)} cells",
            f"pipeline {round_trip['t_pipe']:.1f} s, corpus generation {round_trip['t_gen']:.1f} s",
        ]
        assert abs(rate - DRIFT_RATE) <= 0.5
        assert worst <= 0.01
        assert cells == {(lvl.value, gen) for lvl in SolarLevel for gen in (False, True)}
        assert not wrong, wrong[:5]
        assert round_trip["t_pipe"] < 120.0


def test_criterion_5_distributions(round_trip):
    with criterion(5, "distribution properties") as notes:
        bundle, series = round_trip["bundle"], round_trip["ingest"].series
        spread = DayScenario().temp_spread
        worst_total = max(abs(h.total - 1.0) for h in bundle.histograms.values())
        chg_tail = bundle.histograms["c_rate_charge"].mass_above(0.15)
        dis_tail = bundle.histograms["c_rate_discharge"].mass_above(0.05)
        dt = series.temp.max(axis=1) - series.temp.min(axis=1)
        within = float(np.mean(dt <= spread))
        notes += [
            f"{len(bundle.histograms)} histograms, max |sum - 1| {worst_total:.1e}",
            f"charge mass > 0.15: {chg_tail}",
            f"discharge mass > 0.05: {dis_tail}",
            f"dT <= {spread}: {within:.2%}",
        ]
        assert worst_total <= 1e-9
        assert chg_tail == 0.0 and dis_tail == 0.0
        assert within == 1.0


def test_criterion_6_health_estimate():
    with criterion(6, "remaining capacity after 387 cycles") as notes:
        cycles = cycle_count(ANNUAL_TABLE[-1][2])
        est = estimate_remaining_capacity(cycles, FadeReference(2000, 80))
        notes.append(f"{cycles:.1f} cycles -> {est.remaining:.2f}%")
        assert est.remaining > 95.0


PERF_SCRIPT = textwrap.dedent(
    """
    import glob, json, resource, sys, time
    from offgrid_bms import pipeline
    paths = sorted(glob.glob(sys.argv[1]))
    t0 = time.perf_counter()
    res = pipeline.ingest(paths)
    t1 = time.perf_counter()
    bundle = pipeline.analyze(res.series)
    t2 = time.perf_counter()
    print(json.dumps({
        "rows": len(res.series), "days": len(bundle.summaries), "ingest_s": t1 - t0, "analyze_s": t2 - t1,
        "maxrss_kb": resource.getrusage(resource.RUSAGE_SELF).ru_maxrss,
    }))
    """
)


def test_criterion_7_desk_scale_performance(tmp_path):
    with criterion(7, "1376-day ingest + analyze performance") as notes:
        paths, _ = generate_corpus(mixed_scenarios(1376, seed=7), 0.0, tmp_path, truth_dt=1.0)
        proc = subprocess.run(
            [sys.executable, "-c", PERF_SCRIPT, str(tmp_path / "*.csv")], capture_output=True, text=True, timeout=900
        )
        assert proc.returncode == 0, proc.stderr[-2000:]
        r = json.loads(proc.stdout.strip().splitlines()[-1])
        total = r["ingest_s"] + r["analyze_s"]
        peak_gb = r["maxrss_kb"] / 1024**2
        notes += [
            f"{r['rows']} rows, {r['days']} days",
            f"ingest {r['ingest_s']:.1f} s + analyze {r['analyze_s']:.1f} s = {total:.1f} s",
            f"peak RSS {peak_gb:.2f} GB",
        ]
        assert r["rows"] == 1376 * 5760 and r["days"] == 1376
        assert total < 120.0
        assert peak_gb < 4.0
