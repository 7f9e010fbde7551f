"""offgrid-bms command line.

Exit codes: 0 success, 1 internal error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

from . import health, pipeline, synth
from .config import BadScenario, ConfigError, RunConfig, load_config, with_overrides
from .core import day_index_to_date, local_day_index
from .ingest import DriftSearch, SpanTooShort, estimate_drift, load_series, manifest_path, periodicity_score, save_series, write_manifest
from .metrics.daily import annual_report, pattern_counts
from .patterns import classify_day
from .report import (
    HISTOGRAM_COLUMNS,
    UnwritableOutput,
    ensure_dir,
    header,
    histogram_rows,
    read_report_csv,
    sha256_bytes,
    sha256_file,
    write_csv,
    write_json,
)

log = logging.getLogger("offgrid_bms")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


class NoInputFiles(ConfigError):
    pass


class MissingSeries(ConfigError):
    pass


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI run configuration")
    p.add_argument("--out", help="output directory (default from config)")
    p.add_argument("--flip-current", action="store_true", default=None, help="negate current for discharge-positive sources")
    p.add_argument("--gap-policy", choices=("exclude", "raw"))
    p.add_argument("--gap-threshold", type=float, help="seconds; longer sample intervals are holes")
    p.add_argument("--tz-offset", type=float, help="local civil time offset from UTC in hours")
    p.add_argument("--seed", type=int, help="RNG seed for simulate")
    p.add_argument("--workers", type=int, help="parallel file parsers")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="offgrid-bms", description="Long-term BMS telemetry analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="merge daily CSV files and repair clock drift")
    p.add_argument("inputs", nargs="*", help="CSV files or globs (default: [paths] input)")
    p.add_argument("--series", help="consolidated series path (default OUT/series.npz)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--no-drift", action="store_true", help="keep timestamps as logged")
    g.add_argument("--shift", type=float, help="fixed total clock shift in seconds instead of searching")

    p = sub.add_parser("drift", parents=[common], help="search the clock shift of a consolidated series")
    p.add_argument("--series", help="consolidated series (default OUT/series.npz)")
    p.add_argument("--lo", type=float, default=-21600.0)
    p.add_argument("--hi", type=float, default=21600.0)
    p.add_argument("--step", type=float, default=60.0)

    p = sub.add_parser("analyze", parents=[common], help="daily summaries, annual table, histograms, phase matrix")
    p.add_argument("--series")

    p = sub.add_parser("classify", parents=[common], help="per-day operation pattern")
    p.add_argument("--series")

    p = sub.add_parser("report", parents=[common], help="annual usage table and capacity estimate from daily summaries")
    p.add_argument("--daily", help="daily_summary.csv from analyze (default OUT/daily_summary.csv)")
    p.add_argument("--year-start", action="append", type=date.fromisoformat, help="interval start date; repeatable")

    p = sub.add_parser("cost", parents=[common], help="cumulative cost curves and crossover year")
    p.add_argument("--horizon", type=int)
    p.add_argument("--no-moving", action="store_true", help="ignore moving cost")

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic corpus with ground truth")
    p.add_argument("--days", type=int)
    p.add_argument("--start", type=date.fromisoformat)
    p.add_argument("--drift-rate", type=float, help="s/day")
    p.add_argument("--truth-dt", type=float, help="ground-truth integration step in seconds")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    return with_overrides(
        cfg,
        output_dir=args.out,
        flip_current=args.flip_current,
        gap_policy=args.gap_policy,
        gap_threshold=args.gap_threshold,
        tz_offset_hours=args.tz_offset,
        workers=args.workers,
        sim_seed=args.seed,
        sim_days=getattr(args, "days", None),
        sim_start=getattr(args, "start", None),
        sim_drift_rate=getattr(args, "drift_rate", None),
        sim_truth_dt=getattr(args, "truth_dt", None),
        cost_horizon=getattr(args, "horizon", None),
    )


def _series_path(args, cfg: RunConfig) -> Path:
    return Path(args.series) if getattr(args, "series", None) else Path(cfg.output_dir) / "series.npz"


def _load(args, cfg):
    path = _series_path(args, cfg)
    if not path.exists():
        raise MissingSeries(f"no consolidated series at {path}; run ingest first")
    mpath = manifest_path(path)
    input_hash = sha256_file(mpath) if mpath.exists() else sha256_file(path)
    return load_series(path), input_hash


def cmd_ingest(args, cfg: RunConfig) -> int:
    patterns = args.inputs or [cfg.input_glob]
    paths = sorted({p for pat in patterns for p in (glob.glob(pat) or ([pat] if Path(pat).is_file() else []))})
    if not paths:
        raise NoInputFiles(f"no input files match {patterns}")
    drift = "none" if args.no_drift else (args.shift if args.shift is not None else "auto")
    res = pipeline.ingest(paths, flip_current=cfg.flip_current, workers=cfg.workers, drift=drift)
    out = _series_path(args, cfg)
    ensure_dir(out.parent)
    try:
        save_series(res.series, out)
    except OSError as exc:
        raise UnwritableOutput(str(exc)) from exc
    manifest = {"header": header(cfg.digest(), sha256_bytes("\n".join(paths).encode()), "ingest"), **res.manifest}
    write_manifest(manifest_path(out), manifest)
    rate = f"{res.drift.rate:.2f} s/day" if res.drift else "not estimated"
    print(f"ingested {len(paths)} files, {len(res.series)} rows, {res.manifest['n_rejections']} rejected rows; drift {rate} -> {out}")
    return EXIT_OK


def cmd_drift(args, cfg: RunConfig) -> int:
    series, input_hash = _load(args, cfg)
    try:
        model = estimate_drift(series, DriftSearch(lo=args.lo, hi=args.hi, step=args.step))
    except SpanTooShort as exc:
        raise ConfigError(str(exc)) from exc
    out = ensure_dir(cfg.output_dir)
    body = {"drift": model.as_dict(), "periodicity_score": periodicity_score(series)}
    write_json(out / "drift.json", header(cfg.digest(), input_hash, "drift"), body)
    print(f"total shift {model.total_shift:.0f} s over {model.span_days:.1f} days ({model.rate:.2f} s/day)")
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    series, input_hash = _load(args, cfg)
    b = pipeline.analyze(
        series,
        cfg.battery,
        rule=cfg.pattern_rule(),
        tz_offset_hours=cfg.tz_offset_hours,
        gap_threshold=cfg.gap_threshold,
        gap_policy=cfg.gap_policy,
    )
    out = ensure_dir(cfg.output_dir)
    head = header(cfg.digest(), input_hash, "analyze")
    write_json(out / "annual.json", head, {"rows": [r.as_dict() for r in b.annual]})
    cols = list(b.annual[0].as_dict())
    write_csv(out / "annual.csv", head, cols, [[r.as_dict()[c] for c in cols] for r in b.annual])
    write_csv(out / "daily_summary.csv", head, pipeline.SUMMARY_COLUMNS, pipeline.summary_rows(b.summaries))
    write_json(out / "histograms.json", head, {name: h.as_dict() for name, h in b.histograms.items()})
    write_csv(out / "histograms.csv", head, HISTOGRAM_COLUMNS, [r for n, h in b.histograms.items() for r in histogram_rows(n, h)])
    write_json(out / "delta_t.json", head, b.delta_t)
    write_json(out / "health.json", head, b.health)
    n_phase = b.phase_matrix.shape[1]
    phase_cols = ["date"] + [f"{(k * 1440 // n_phase) // 60:02d}:{(k * 1440 // n_phase) % 60:02d}" for k in range(n_phase)]
    write_csv(
        out / "day_phase_vtot.csv",
        head,
        phase_cols,
        [[d.isoformat(), *row.tolist()] for d, row in zip(b.phase_days, b.phase_matrix)],
    )
    print(f"analyzed {len(b.summaries)} days -> {out}")
    return EXIT_OK


def cmd_classify(args, cfg: RunConfig) -> int:
    series, input_hash = _load(args, cfg)
    rule = cfg.pattern_rule()
    days = local_day_index(series.t, cfg.tz_offset_hours)
    rows, labels = [], []
    bounds = [0, *((days[1:] != days[:-1]).nonzero()[0] + 1).tolist(), len(days)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        c = classify_day(series.slice(a, b), rule, cfg.battery, cfg.tz_offset_hours)
        labels.append(c.pattern)
        seg = "; ".join(f"{s.start:.0f}-{s.end:.0f}@{s.mean_current:.2f}A" for s in c.segments)
        rows.append((day_index_to_date(int(days[a])).isoformat(), c.pattern.value, c.solar_level.value, c.solar_ah, int(c.generator_on), seg, b - a))
    out = ensure_dir(cfg.output_dir)
    head = header(cfg.digest(), input_hash, "classify")
    write_csv(out / "classification.csv", head, ("date", "pattern", "solar_level", "solar_Ah", "generator_on", "generator_segments", "n_samples"), rows)
    counts = {p: sum(1 for x in labels if x.value == p) for p in ("P1", "P2", "P3", "P4", "Unclassified")}
    write_json(out / "pattern_counts.json", head, counts)
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    path = Path(args.daily) if args.daily else Path(cfg.output_dir) / "daily_summary.csv"
    if not path.exists():
        raise MissingSeries(f"no daily summary at {path}; run analyze first")
    _, rows = read_report_csv(path)
    summaries = pipeline.summaries_from_rows(rows)
    if not summaries:
        raise MissingSeries(f"{path} has no days")
    annual = annual_report(summaries, cfg.battery, args.year_start)
    est = health.estimate_remaining_capacity(annual[-1].cycles)
    out = ensure_dir(cfg.output_dir)
    head = header(cfg.digest(), sha256_file(path), "report")
    body = {
        "annual": [r.as_dict() for r in annual],
        "pattern_counts": pattern_counts(summaries),
        "health": {"cycles": annual[-1].cycles, "remaining_capacity_pct": est.remaining, "beyond_reference": est.beyond_reference},
    }
    write_json(out / "report.json", head, body)
    print(f"{'interval':<24}{'C_chg':>10}{'C_dis':>10}{'CR%':>7}{'cycles':>8}{'E_chg':>9}{'E_dis':>9}{'ER%':>7}")
    for r in annual:
        cr = f"{r.cr_loss:.1f}" if r.cr_loss is not None else "-"
        er = f"{r.er_loss:.1f}" if r.er_loss is not None else "-"
        print(f"{r.label:<24}{r.c_chg:>10.1f}{r.c_dis:>10.1f}{cr:>7}{r.cycles:>8.1f}{r.e_chg:>9.1f}{r.e_dis:>9.1f}{er:>7}")
    print(f"remaining capacity {est.remaining:.2f}% after {annual[-1].cycles:.1f} cycles")
    return EXIT_OK


def cmd_cost(args, cfg: RunConfig) -> int:
    scenarios = cfg.cost_scenarios
    if len(scenarios) != 2:
        raise BadScenario(f"cost needs exactly two scenarios, config has {len(scenarios)}")
    if args.no_moving:
        scenarios = tuple(replace(s, include_moving=False) for s in scenarios)
    a, b = (health.cumulative_cost_curve(s, cfg.cost_horizon) for s in scenarios)
    cross = health.crossover_year(a, b)
    out = ensure_dir(cfg.output_dir)
    head = header(cfg.digest(), sha256_bytes(b""), "cost")
    names = [s.name or f"scenario{k + 1}" for k, s in enumerate(scenarios)]
    body = {
        "scenarios": [
            {"name": n, "unit_cost": health.purchase_cost(s), "battery_cost": health.battery_cost(s), "moving_cost": health.moving_cost(s)}
            for n, s in zip(names, scenarios)
        ],
        "curves": {n: [c for _, c in curve.points] for n, curve in zip(names, (a, b))},
        "crossover": {"year": cross.year, "immediate": cross.immediate, "a": names[0], "b": names[1]},
    }
    write_json(out / "cost.json", head, body)
    write_csv(out / "cost.csv", head, ("year", *names), [(y, ca, cb) for (y, ca), (_, cb) in zip(a.points, b.points)])
    verdict = "none within horizon" if cross.year is None else f"year {cross.year}" + (" (immediate)" if cross.immediate else "")
    print(f"{names[0]} exceeds {names[1]}: {verdict}")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    sim = cfg.simulate
    scenarios = synth.mixed_scenarios(sim.days, sim.start, sim.seed, sim.mix, cadence=sim.cadence)
    out = ensure_dir(Path(cfg.output_dir) / "corpus")
    try:
        paths, manifest = synth.generate_corpus(scenarios, sim.drift_rate, out, truth_dt=sim.truth_dt, tz_offset_hours=cfg.tz_offset_hours)
    except ValueError as exc:
        raise BadScenario(str(exc)) from exc
    print(f"wrote {len(paths)} daily files, drift {sim.drift_rate} s/day -> {out}")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "drift": cmd_drift,
    "analyze": cmd_analyze,
    "classify": cmd_classify,
    "report": cmd_report,
    "cost": cmd_cost,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UnwritableOutput) as exc:
        print(f"offgrid-bms {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
