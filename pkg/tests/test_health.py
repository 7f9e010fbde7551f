from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from offgrid_bms.config import DEFAULT_COST_SCENARIOS
from offgrid_bms.core import CostScenario
from offgrid_bms.health import (
    CostCurve,
    FadeReference,
    MismatchedHorizon,
    battery_cost,
    crossover_year,
    cumulative_cost_curve,
    estimate_remaining_capacity,
    moving_cost,
)

LEAD, LI = DEFAULT_COST_SCENARIOS


def scenario(price, density, life, moving=True, energy=100.0):
    return CostScenario(battery_price=price, energy_density=density, moving_price=10.0, pack_energy=energy, service_life=life, include_moving=moving)


def test_remaining_capacity_examples():
    assert estimate_remaining_capacity(387).remaining == pytest.approx(96.13)
    assert estimate_remaining_capacity(0).remaining == 100.0
    est = estimate_remaining_capacity(2000)
    assert est.remaining == 80.0 and not est.beyond_reference
    assert estimate_remaining_capacity(2500).beyond_reference
    assert estimate_remaining_capacity(20000).remaining == 0.0


def test_fade_reference_invariants():
    with pytest.raises(ValueError):
        FadeReference(cycle_life=0)
    with pytest.raises(ValueError):
        FadeReference(eol_capacity=100)
    with pytest.raises(ValueError):
        estimate_remaining_capacity(-1)


@given(st.floats(0, 5000), st.floats(0, 5000))
def test_remaining_capacity_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert estimate_remaining_capacity(hi).remaining <= estimate_remaining_capacity(lo).remaining


@given(st.floats(0, 2000), st.floats(0, 1))
def test_remaining_capacity_is_affine_below_life(x, w):
    mid = estimate_remaining_capacity(w * x).remaining
    assert mid == pytest.approx((1 - w) * 100.0 + w * estimate_remaining_capacity(x).remaining, abs=1e-9)


def test_battery_cost_examples():
    assert battery_cost(scenario(2000, 1 / 16, 15)) == 200000
    assert battery_cost(scenario(150, 1 / 35, 2)) == 15000
    assert battery_cost(scenario(500, 1 / 35, 2, energy=0.5)) == 250


def test_moving_cost_examples():
    assert moving_cost(scenario(2000, 1 / 16, 15)) == pytest.approx(32000)
    assert moving_cost(scenario(500, 1 / 35, 2)) == pytest.approx(70000)
    assert moving_cost(scenario(500, 1 / 35, 2, moving=False)) == 0.0


def test_ladder_and_flat_lines():
    lead = cumulative_cost_curve(LEAD, 10)
    assert [c for _, c in lead.points[:4]] == [pytest.approx(v) for v in (120000, 120000, 240000, 240000)]
    assert {c for _, c in cumulative_cost_curve(LI, 10).points} == {232000.0}
    low = cumulative_cost_curve(replace(LI, battery_price=500), 10)
    assert {c for _, c in low.points} == {82000.0}


def test_crossover_years():
    assert crossover_year(cumulative_cost_curve(LEAD), cumulative_cost_curve(LI)).year == 3
    off = [replace(s, include_moving=False) for s in (LEAD, LI)]
    assert crossover_year(*(cumulative_cost_curve(s) for s in off)).year == 9


def test_identical_curves_never_cross():
    c = cumulative_cost_curve(LEAD)
    assert crossover_year(c, c).year is None


def test_low_price_pair_crosses_immediately():
    lead_low = cumulative_cost_curve(replace(LEAD, battery_price=150))
    li_low = cumulative_cost_curve(replace(LI, battery_price=500))
    x = crossover_year(lead_low, li_low)
    assert (x.year, x.immediate) == (1, True)


def test_mismatched_horizon():
    with pytest.raises(MismatchedHorizon):
        crossover_year(cumulative_cost_curve(LEAD, 5), cumulative_cost_curve(LI, 6))


def test_curve_invariants():
    with pytest.raises(ValueError):
        CostCurve(((1, 10.0), (2, 5.0)))
    with pytest.raises(ValueError):
        CostCurve(((0, 10.0),))
    with pytest.raises(ValueError):
        cumulative_cost_curve(LEAD, 0)


prices = st.floats(50, 3000)
lives = st.integers(1, 15)


@given(prices, st.floats(0.01, 0.3), lives, st.integers(1, 30), st.booleans())
def test_doubling_energy_doubles_cost(price, density, life, horizon, moving):
    s = scenario(price, density, life, moving)
    a = cumulative_cost_curve(s, horizon)
    b = cumulative_cost_curve(replace(s, pack_energy=2 * s.pack_energy), horizon)
    for (_, x), (_, y) in zip(a.points, b.points):
        assert y == pytest.approx(2 * x, rel=1e-12)
    costs = [c for _, c in a.points]
    assert costs == sorted(costs)


@given(prices, prices, st.integers(1, 9), st.integers(10, 30))
def test_moving_cost_only_accelerates_crossover(lead_price, li_price, lead_life, horizon):
    # Li-ion life covers the horizon, so its curve is flat
    lead, li = scenario(lead_price, 1 / 35, lead_life), scenario(li_price, 1 / 16, horizon)
    on = crossover_year(cumulative_cost_curve(lead, horizon), cumulative_cost_curve(li, horizon)).year
    off = crossover_year(
        cumulative_cost_curve(replace(lead, include_moving=False), horizon),
        cumulative_cost_curve(replace(li, include_moving=False), horizon),
    ).year
    if on is not None and off is not None:
        assert on <= off
