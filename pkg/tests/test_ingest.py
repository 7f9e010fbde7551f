import random
import warnings
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import csv_row, drifted_series, make_series, synthetic_days
from offgrid_bms.core import CSV_COLUMNS, RejectionKind, SampleBatch, TimeSeries, parse_timestamp
from offgrid_bms.ingest import (
    DegenerateVariance,
    DriftModel,
    EmptyFile,
    NonMonotonicResult,
    SpanTooShort,
    UnreadableHeader,
    apply_drift_correction,
    estimate_drift,
    load_series,
    merge_series,
    parse_bms_csv,
    periodicity_score,
    read_bms_files,
    save_series,
)
from offgrid_bms.synth import DayScenario, generate_day, inject_drift, write_csv

HEADER = ",".join(CSV_COLUMNS)


def test_three_row_file():
    text = "\n".join([HEADER, csv_row("2017-01-01 00:00:00"), csv_row("2017-01-01 00:00:15"), csv_row("2017-01-01 00:00:30")])
    res = parse_bms_csv(text.encode())
    assert len(res.batch) == 3 and res.rejections == []
    assert res.batch.t[1] - res.batch.t[0] == 15.0


def test_one_corrupt_line_in_a_day_file(tmp_path):
    batch, _ = generate_day(DayScenario(pattern="P1", date=date(2017, 5, 1)), truth_dt=1.0)
    path = tmp_path / "day.csv"
    write_csv(path, batch.t, batch)
    lines = path.read_text().splitlines()
    assert len(lines) == 5761
    lines[1000] = lines[1000].replace(",", ",x", 1)
    path.write_text("\n".join(lines) + "\n")
    res = parse_bms_csv(path.read_bytes(), source="day.csv")
    assert len(res.batch) == 5759
    assert len(res.rejections) == 1
    rej = res.rejections[0]
    assert rej.line == 1001 and rej.kind is RejectionKind.MALFORMED_FIELD and rej.source == "day.csv"


def test_short_row_and_blank_lines_are_handled():
    text = "\n".join([HEADER, csv_row("2017-01-01 00:00:00"), "", "2017-01-01 00:00:15,52.0,3.2", csv_row("2017-01-01 00:00:30"), ""])
    res = parse_bms_csv(text)
    assert len(res.batch) == 2
    assert [r.line for r in res.rejections] == [4]
    assert res.rejections[0].kind is RejectionKind.MISSING_FIELD
    assert list(res.batch.line) == [2, 5]


def test_header_errors():
    with pytest.raises(EmptyFile):
        parse_bms_csv(b"")
    with pytest.raises(UnreadableHeader):
        parse_bms_csv(csv_row("2017-01-01 00:00:00"))
    with pytest.raises(UnreadableHeader):
        parse_bms_csv("time,V_tot,I\n2017-01-01 00:00:00,52,1\n")


def test_header_only_gives_empty_batch():
    assert len(parse_bms_csv(HEADER + "\n").batch) == 0


def test_flip_current_on_ingest():
    text = "\n".join([HEADER, csv_row("2017-01-01 00:00:00", current=-4.5)])
    assert parse_bms_csv(text, flip_current=True).batch.current[0] == 4.5


def test_fast_and_slow_paths_agree():
    rows = [csv_row(f"2017-01-01 00:{m:02d}:00", current=m * 0.5 - 3) for m in range(10)]
    fast = parse_bms_csv("\n".join([HEADER, *rows])).batch
    slow = parse_bms_csv("\n".join([HEADER, *rows[:5], "", *rows[5:]])).batch
    for c in ("t", "v_total", "current", "v_cell", "temp"):
        np.testing.assert_array_equal(getattr(fast, c), getattr(slow, c))


def _batch(times, source, base=0.0):
    n = len(times)
    return SampleBatch(
        t=times, v_total=np.full(n, 52.0) + base, v_cell=np.full((n, 16), 3.25), current=np.arange(n) + base,
        temp=np.full((n, 4), 20.0), source=source,
    )


def test_merge_sorts_out_of_order_files():
    day2 = _batch(np.arange(86400.0, 86400 + 60, 15), "b.csv")
    day1 = _batch(np.arange(0.0, 60, 15), "a.csv")
    s = merge_series([day2, day1])
    assert np.all(np.diff(s.t) > 0) and len(s) == 8
    assert [p["source"] for p in s.provenance] == ["a.csv", "b.csv"]


def test_merge_keeps_first_duplicate_by_source_name():
    a = _batch(np.array([0.0, 15.0, 30.0]), "a.csv", base=0.0)
    b = _batch(np.array([30.0, 45.0]), "b.csv", base=100.0)
    s = merge_series([b, a])
    assert list(s.t) == [0.0, 15.0, 30.0, 45.0]
    assert s.current[2] == 2.0  # the row from a.csv
    assert s.current[3] == 101.0


def test_merge_is_independent_of_batch_order():
    rng = random.Random(0)
    batches = [_batch(np.arange(k * 600.0, k * 600.0 + 600, 15), f"f{k:03d}.csv") for k in range(100)]
    reference = merge_series(batches)
    shuffled = batches[:]
    rng.shuffle(shuffled)
    assert merge_series(shuffled).equals(reference)


@given(st.lists(st.integers(0, 3), min_size=40, max_size=40), st.randoms(use_true_random=False))
def test_merge_is_independent_of_partition(assignment, rnd):
    t = np.round(np.cumsum(np.full(40, 15.0)), 3)
    t[10] = t[9]  # a duplicated timestamp inside the data
    rows = list(range(40))
    rnd.shuffle(rows)
    parts = {}
    for r, k in zip(rows, assignment):
        parts.setdefault(k, []).append(r)
    batches = []
    for k, idx in parts.items():
        idx = sorted(idx)
        batches.append(SampleBatch(
            t=t[idx], v_total=np.full(len(idx), 52.0), v_cell=np.full((len(idx), 16), 3.2),
            current=np.asarray(idx, dtype=float), temp=np.full((len(idx), 4), 20.0), source="same.csv",
            line=np.asarray(idx) + 2,
        ))
    merged = merge_series(batches)
    assert list(merged.t) == sorted(set(t.tolist()))
    assert merged.current[9] == 9.0  # lower source line wins the duplicate


def test_periodicity_of_a_daily_sinusoid():
    t = np.arange(0, 30 * 86400, 15.0)
    s = make_series(t, np.zeros_like(t), v_total=52 + np.sin(2 * np.pi * t / 86400))
    assert periodicity_score(s) > 0.99


def test_periodicity_of_white_noise():
    t = np.arange(0, 30 * 86400, 15.0)
    v = 52 + np.random.default_rng(1).normal(0, 1, len(t))
    assert periodicity_score(make_series(t, np.zeros_like(t), v_total=v)) < 0.05


def test_periodicity_of_constant_signal():
    t = np.arange(0, 86400, 15.0)
    with pytest.warns(DegenerateVariance):
        assert periodicity_score(make_series(t, np.zeros_like(t))) == 0.0


def test_drift_needs_two_weeks():
    t = np.arange(0, 10 * 86400, 60.0)
    with pytest.raises(SpanTooShort):
        estimate_drift(make_series(t, np.zeros_like(t), v_total=52 + np.sin(t / 86400 * 2 * np.pi)))


def test_drift_free_corpus_gives_near_zero_shift():
    series, _ = drifted_series(60, 0.0)
    assert abs(estimate_drift(series).total_shift) <= 60.0


@settings(max_examples=4)
@given(st.floats(-20.0, 20.0))
def test_drift_rate_recovered(rate):
    series, true_shift = drifted_series(200, rate)
    model = estimate_drift(series)
    assert abs(model.rate - true_shift / model.span_days) <= 0.5


@pytest.mark.parametrize("rate", [12.0, -15.0, 20.0])
def test_correction_raises_periodicity(rate):
    series, true_shift = drifted_series(60, rate)
    assert abs(true_shift) >= 600
    corrected = apply_drift_correction(series, estimate_drift(series))
    assert periodicity_score(corrected) >= periodicity_score(series)


def test_zero_shift_is_identity():
    series, _ = drifted_series(20, 0.0)
    assert apply_drift_correction(series, DriftModel(*series.span, 0.0)) is series


def test_affine_endpoints():
    t = np.arange(0.0, 100 * 86400.0, 3600.0)
    s = make_series(t, np.zeros_like(t))
    out = apply_drift_correction(s, DriftModel(t[0], t[-1], 1234.0))
    assert out.t[0] == t[0]
    assert out.t[-1] == pytest.approx(t[-1] - 1234.0, abs=1e-6)
    np.testing.assert_array_equal(out.current, s.current)


def test_inject_then_correct_round_trip():
    t = np.arange(0.0, 200 * 86400.0, 15.0)
    raw = inject_drift(t, 10.9, t[0])
    model = DriftModel(raw[0], raw[-1], raw[-1] - t[-1])
    assert np.max(np.abs(model.correct(raw) - t)) < 1.0
    # rate is per day of raw (drifted) clock span
    assert model.rate == pytest.approx(10.9 / (1 + 10.9 / 86400), rel=1e-9)


def test_order_inverting_correction_is_rejected():
    t = np.arange(0.0, 10.0, 1.0)
    with pytest.raises(NonMonotonicResult):
        apply_drift_correction(make_series(t, np.zeros_like(t)), DriftModel(0.0, 9.0, 9.0))


def test_series_file_round_trip_is_byte_stable(tmp_path):
    series, _ = drifted_series(3, 0.0)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    save_series(series, a)
    save_series(series, b)
    assert a.read_bytes() == b.read_bytes()
    assert load_series(a).equals(series)


def test_parallel_read_matches_serial(tmp_path):
    batches, _ = synthetic_days(6)
    paths = []
    for b in batches[:4]:
        p = tmp_path / b.source
        write_csv(p, b.t, b)
        paths.append(p)
    (tmp_path / "broken.csv").write_text("not,a,header\n")
    paths.append(tmp_path / "broken.csv")
    serial, fail_s = read_bms_files(paths)
    parallel, fail_p = read_bms_files(paths, workers=2)
    assert fail_s.keys() == fail_p.keys() == {"broken.csv"}
    assert merge_series([r.batch for r in serial]).equals(merge_series([r.batch for r in parallel]))


def test_written_day_round_trips_through_ingest(tmp_path):
    batch, _ = generate_day(DayScenario(pattern="P3", date=date(2018, 2, 2)), truth_dt=1.0)
    write_csv(tmp_path / "d.csv", batch.t, batch)
    got = parse_bms_csv((tmp_path / "d.csv").read_bytes()).batch
    np.testing.assert_allclose(got.t, batch.t, atol=1e-3)
    np.testing.assert_allclose(got.current, batch.current, atol=1e-9)
    np.testing.assert_allclose(got.v_cell, batch.v_cell, atol=1e-6)
    assert got.t[0] == parse_timestamp("2018-02-01 16:00:00")
