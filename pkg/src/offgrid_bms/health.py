"""Remaining-capacity estimate and the lead-acid vs Li-ion cost ladder."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import CostScenario, TelemetryError


class MismatchedHorizon(TelemetryError):
    pass


@dataclass(frozen=True)
class FadeReference:
    cycle_life: float = 2000.0
    eol_capacity: float = 80.0  # percent remaining at end of life

    def __post_init__(self):
        if not self.cycle_life > 0:
            raise ValueError("cycle_life must be positive")
        if not 0 < self.eol_capacity < 100:
            raise ValueError("eol_capacity must lie strictly between 0 and 100")


@dataclass(frozen=True)
class CapacityEstimate:
    remaining: float  # percent
    beyond_reference: bool


def estimate_remaining_capacity(cycles: float, ref: FadeReference = FadeReference()) -> CapacityEstimate:
    """Linear fade from 100 % at zero cycles to ``eol_capacity`` at ``cycle_life``."""
    if cycles < 0:
        raise ValueError("cycles must be non-negative")
    remaining = 100.0 - (100.0 - ref.eol_capacity) * (cycles / ref.cycle_life)
    return CapacityEstimate(max(0.0, remaining), cycles > ref.cycle_life)


def battery_cost(s: CostScenario) -> float:
    return s.battery_price * s.pack_energy


def moving_cost(s: CostScenario) -> float:
    # factor 2: new units carried in, old units carried out
    if not s.include_moving:
        return 0.0
    return s.moving_price * (2.0 * s.pack_energy / s.energy_density)


def purchase_cost(s: CostScenario) -> float:
    return battery_cost(s) + moving_cost(s)


@dataclass(frozen=True)
class CostCurve:
    points: tuple[tuple[int, float], ...]  # (year, cumulative USD), year from 1
    name: str = ""

    def __post_init__(self):
        years = [y for y, _ in self.points]
        if years != list(range(1, len(years) + 1)):
            raise ValueError("cost curve years must run 1, 2, ...")
        costs = [c for _, c in self.points]
        if any(b < a for a, b in zip(costs, costs[1:])):
            raise ValueError("cumulative cost must be non-decreasing")

    @property
    def horizon(self) -> int:
        return len(self.points)

    def cost(self, year: int) -> float:
        return self.points[year - 1][1]


def cumulative_cost_curve(s: CostScenario, horizon: int = 10) -> CostCurve:
    """Cumulative spend by year; a new pack is bought at the start of each service life."""
    if horizon < 1:
        raise ValueError("horizon must be at least one year")
    unit = purchase_cost(s)
    # tolerance keeps e.g. life 2.0000000001 from adding a spurious purchase
    points = tuple((y, math.ceil(y / s.service_life - 1e-9) * unit) for y in range(1, horizon + 1))
    return CostCurve(points, s.name)


@dataclass(frozen=True)
class Crossover:
    year: int | None
    immediate: bool = False


def crossover_year(a: CostCurve, b: CostCurve) -> Crossover:
    """First year in which ``a`` costs more than ``b``.

    ``immediate`` is set when ``a`` is already the dearer option in year 1.
    """
    if a.horizon != b.horizon:
        raise MismatchedHorizon(f"horizons differ: {a.horizon} vs {b.horizon}")
    for (year, ca), (_, cb) in zip(a.points, b.points):
        if ca > cb:
            return Crossover(year, immediate=year == 1)
    return Crossover(None)
