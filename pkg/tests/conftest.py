from __future__ import annotations

import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from offgrid_bms.core import N_CELLS, N_TEMPS, TimeSeries
from offgrid_bms.synth import generate_day, inject_drift, mixed_scenarios

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_series(t, current, v_total=None, temp=None) -> TimeSeries:
    t = np.asarray(t, dtype=np.float64)
    n = len(t)
    v = np.full(n, 52.0) if v_total is None else np.broadcast_to(np.asarray(v_total, dtype=np.float64), (n,))
    cells = np.repeat((v / N_CELLS)[:, None], N_CELLS, axis=1)
    temps = np.full((n, N_TEMPS), 20.0) if temp is None else np.asarray(temp, dtype=np.float64).reshape(n, N_TEMPS)
    return TimeSeries(t=t, v_total=v, v_cell=cells, current=np.asarray(current, dtype=np.float64), temp=temps)


def csv_row(ts: str, v_total=52.0, current=5.0, cells=None, temps=(20.0, 21.0, 20.0, 22.0)) -> str:
    cells = [v_total / N_CELLS] * N_CELLS if cells is None else cells
    return ",".join([ts, f"{v_total}", *(f"{c:.3f}" for c in cells), f"{current}", *(f"{x}" for x in temps)])


@pytest.fixture
def series_factory():
    return make_series


@functools.lru_cache(maxsize=4)
def synthetic_days(n_days: int, seed: int = 7, truth_dt: float = 1.0):
    """Batches and truths of a mixed-pattern corpus, generated once per session."""
    out = [generate_day(s, truth_dt=truth_dt) for s in mixed_scenarios(n_days, seed=seed)]
    return tuple(b for b, _ in out), tuple(tr for _, tr in out)


def drifted_series(n_days: int, rate: float, seed: int = 7) -> tuple[TimeSeries, float]:
    """Concatenated synthetic corpus with clock drift ``rate`` s/day and its true total shift."""
    batches, _ = synthetic_days(n_days, seed)
    cols = {c: np.concatenate([getattr(b, c) for b in batches]) for c in ("t", "v_total", "v_cell", "current", "temp")}
    t = cols.pop("t")
    raw = inject_drift(t, rate, t[0])
    return TimeSeries(t=raw, **cols), float(raw[-1] - t[-1])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
