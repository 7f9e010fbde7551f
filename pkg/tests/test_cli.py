import json

import pytest

from offgrid_bms.cli import main
from offgrid_bms.config import BadScenario, ConfigError, load_config, parse_number
from offgrid_bms.report import read_report_csv
from offgrid_bms.synth import load_manifest

COST_INI = """
[cost]
horizon = 10
scenarios = lead, li

[cost.lead]
name = lead-acid
battery_price = 500
energy_density = 1/35
moving_price = 10
pack_energy = 100
service_life = 2

[cost.li]
name = li-ion
battery_price = 2000
energy_density = 1/16
moving_price = 10
pack_energy = 100
service_life = 15
"""


def body(path):
    data = json.loads(path.read_text())
    data.pop("header")
    return data


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    """A simulated 16-day corpus taken through ingest and analyze."""
    out = tmp_path_factory.mktemp("run")
    assert main(["simulate", "--out", str(out), "--days", "16", "--drift-rate", "40", "--truth-dt", "1", "--seed", "5"]) == 0
    assert main(["ingest", str(out / "corpus" / "*.csv"), "--out", str(out)]) == 0
    assert main(["analyze", "--out", str(out)]) == 0
    return out


def test_empty_glob_exits_2(tmp_path, capsys):
    assert main(["ingest", str(tmp_path / "none*.csv"), "--out", str(tmp_path)]) == 2
    assert "no input files" in capsys.readouterr().err


def test_missing_series_exits_2(tmp_path):
    assert main(["analyze", "--out", str(tmp_path)]) == 2


def test_simulate_writes_corpus_and_manifest(run):
    manifest = load_manifest(run / "corpus" / "manifest.json")
    assert len(manifest["days"]) == 16
    assert len(list((run / "corpus").glob("bms_*.csv"))) == 16
    assert manifest["total_shift_s"] == pytest.approx(40 * 15 + 40 * (86385 / 86400), rel=1e-3)


def test_ingest_manifest_records_sources_and_drift(run):
    m = json.loads((run / "series.manifest.json").read_text())
    assert len(m["sources"]) == 16 and m["n_rejections"] == 0
    assert m["drift"] is not None
    assert m["periodicity_after"] >= m["periodicity_before"]
    assert set(m["header"]) == {"schema_version", "config_hash", "input_manifest_hash", "report"}


def test_analyze_matches_ground_truth(run):
    truth = load_manifest(run / "corpus" / "manifest.json")["days"]
    total = body(run / "annual.json")["rows"][-1]
    assert total["interval"] == "All time"
    for key, col in (("c_chg", "c_chg_Ah"), ("c_dis", "c_dis_Ah"), ("e_chg", "e_chg_kWh"), ("e_dis", "e_dis_kWh")):
        assert total[col] == pytest.approx(sum(d[key] for d in truth), rel=0.01)
    hist = body(run / "histograms.json")
    for h in hist.values():
        assert abs(sum(h["probabilities"]) + h["underflow"] + h["overflow"] - 1) <= 1e-9
    head, rows = read_report_csv(run / "daily_summary.csv")
    assert head["report"] == "analyze" and len(rows) >= 16
    for name in ("delta_t.json", "health.json", "day_phase_vtot.csv", "annual.csv", "histograms.csv"):
        assert (run / name).exists()


def test_analyze_is_byte_identical_on_rerun(run):
    before = {p.name: p.read_bytes() for p in run.iterdir() if p.is_file()}
    assert main(["analyze", "--out", str(run)]) == 0
    after = {p.name: p.read_bytes() for p in run.iterdir() if p.is_file()}
    assert before == after


def test_gap_policies_agree_on_gapless_data(run, tmp_path):
    series = str(run / "series.npz")
    for policy in ("raw", "exclude"):
        assert main(["analyze", "--series", series, "--out", str(tmp_path / policy), "--gap-policy", policy]) == 0
    for name in ("annual.json", "histograms.json", "health.json"):
        assert body(tmp_path / "raw" / name) == body(tmp_path / "exclude" / name)


def test_classify_and_report(run, capsys):
    assert main(["classify", "--out", str(run)]) == 0
    counts = body(run / "pattern_counts.json")
    assert sum(counts.values()) >= 16
    assert main(["report", "--out", str(run)]) == 0
    text = capsys.readouterr().out
    assert "All time" in text and "remaining capacity" in text
    report = body(run / "report.json")
    assert report["health"]["remaining_capacity_pct"] > 99


def test_drift_command(run):
    assert main(["drift", "--out", str(run), "--lo", "-600", "--hi", "600"]) == 0
    assert -600 <= body(run / "drift.json")["drift"]["total_shift_s"] <= 600


def test_ingest_with_known_shift(run, tmp_path):
    truth = load_manifest(run / "corpus" / "manifest.json")
    shift = str(truth["total_shift_s"])
    assert main(["ingest", str(run / "corpus" / "*.csv"), "--out", str(tmp_path), "--shift", shift]) == 0
    m = json.loads((tmp_path / "series.manifest.json").read_text())
    assert m["drift"]["total_shift_s"] == float(shift)
    assert m["drift"]["end_time"] - m["drift"]["reference_time"] == pytest.approx(truth["true_end"] - truth["true_start"] + float(shift))


def test_cost_command(tmp_path):
    cfg = tmp_path / "cost.ini"
    cfg.write_text(COST_INI)
    assert main(["cost", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    res = body(tmp_path / "a" / "cost.json")
    assert res["curves"]["li-ion"] == [232000.0] * 10
    assert res["crossover"]["year"] == 3
    assert main(["cost", "--config", str(cfg), "--out", str(tmp_path / "b"), "--no-moving"]) == 0
    assert body(tmp_path / "b" / "cost.json")["crossover"]["year"] == 9
    head, rows = read_report_csv(tmp_path / "a" / "cost.csv")
    assert head["report"] == "cost" and len(rows) == 10


def test_single_cost_scenario_is_rejected(tmp_path):
    cfg = tmp_path / "one.ini"
    cfg.write_text(COST_INI.replace("scenarios = lead, li", "scenarios = lead"))
    assert main(["cost", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_parsing(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(COST_INI + "\n[analysis]\ngap_policy = raw\ntz_offset = 7\n\n[patterns]\nsolar_high_min = 50\n")
    c = load_config(cfg)
    assert c.cost_scenarios[0].energy_density == pytest.approx(1 / 35)
    assert (c.gap_policy, c.tz_offset_hours, c.pattern_rule().solar_high_min) == ("raw", 7.0, 50.0)
    assert parse_number("1/16") == 0.0625
    with pytest.raises(BadScenario):
        bad = tmp_path / "bad.ini"
        bad.write_text(COST_INI.replace("service_life = 2", "service_life = -2"))
        load_config(bad)
    with pytest.raises(ConfigError):
        bad = tmp_path / "bad2.ini"
        bad.write_text("[analysis]\ngap_policy = sometimes\n")
        load_config(bad)
