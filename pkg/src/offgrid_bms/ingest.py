"""Parse per-day BMS CSV files, merge them, and repair real-time-clock drift.

The clock of a standalone BMS drifts; features of the daily routine slide
across the clock face over the years. Drift is modelled as a single linear
rate and recovered by maximising the daily periodicity of the total voltage.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import warnings
import zipfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np
import pandas as pd

from .core import (
    CELL_COLUMNS,
    CSV_COLUMNS,
    NUMERIC_COLUMNS,
    TEMP_COLUMNS,
    V_CELL_GATE,
    V_TOTAL_GATE,
    Rejection,
    RejectionKind,
    SampleBatch,
    TelemetryError,
    TelemetrySample,
    TimeSeries,
    validate_sample,
)

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0
DEFAULT_PERIOD = SECONDS_PER_DAY
N_PHASE = 96  # 15-minute phase bins
MIN_DRIFT_SPAN_DAYS = 14
SCORE_MAX_POINTS = 500_000


class UnreadableHeader(TelemetryError):
    pass


class EmptyFile(TelemetryError):
    pass


class SpanTooShort(TelemetryError):
    pass


class NonMonotonicResult(TelemetryError):
    pass


class DegenerateVariance(UserWarning):
    """Total voltage is constant; periodicity is undefined and scored as 0."""


@dataclass
class ParseResult:
    batch: SampleBatch
    rejections: list[Rejection] = field(default_factory=list)

    @property
    def samples(self) -> SampleBatch:
        return self.batch

    def __len__(self) -> int:
        return len(self.batch)


_BLANK_LINE = re.compile(r"\n[ \t\r]*\n")


def _read_text(stream: IO | bytes | str) -> str:
    data = stream if isinstance(stream, (bytes, str)) else stream.read()
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8-sig")
        except UnicodeDecodeError:
            head, _, rest = data.partition(b"\n")
            try:
                head.decode("utf-8-sig")
            except UnicodeDecodeError as exc:
                raise UnreadableHeader(f"header is not UTF-8: {exc}") from exc
            # body lines that fail to decode are rejected row by row downstream
            return data.decode("utf-8-sig", errors="replace")
    return data.lstrip("﻿")


def _check_header(text: str) -> list[str]:
    if not text.strip():
        raise EmptyFile("file contains no data")
    first = text.lstrip("\r\n").split("\n", 1)[0].strip("\r")
    header = [h.strip() for h in next(csv.reader([first]))]
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise UnreadableHeader(f"header lacks columns {missing}: {first[:120]!r}")
    if len(set(header)) != len(header):
        raise UnreadableHeader("duplicate column names in header")
    return header


def _fast_parse(text: str, header: list[str], flip_current: bool, source: str) -> SampleBatch | None:
    """Vectorised parse; returns None when any row needs per-line treatment."""
    if len(header) != len(CSV_COLUMNS) or _BLANK_LINE.search(text.strip()):
        return None
    try:
        df = pd.read_csv(
            io.StringIO(text),
            dtype={c: np.float64 for c in NUMERIC_COLUMNS} | {"time": str},
            skipinitialspace=True,
            na_filter=True,
            engine="c",
        )
    except (ValueError, pd.errors.ParserError):
        return None
    if list(df.columns) != header:
        return None
    num = df[list(NUMERIC_COLUMNS)].to_numpy(np.float64)
    if not np.isfinite(num).all():
        return None
    try:
        times = pd.to_datetime(df["time"], format="ISO8601", utc=True)
    except (ValueError, TypeError):
        return None
    if times.isna().any():
        return None
    v_total = num[:, 0]
    v_cell = num[:, 1:17]
    if not ((v_total >= V_TOTAL_GATE[0]) & (v_total <= V_TOTAL_GATE[1])).all():
        return None
    if not ((v_cell >= V_CELL_GATE[0]) & (v_cell <= V_CELL_GATE[1])).all():
        return None
    t = times.to_numpy(dtype="datetime64[ns]").astype(np.int64) / 1e9
    current = num[:, 17]
    return SampleBatch(
        t=t,
        v_total=v_total,
        v_cell=v_cell,
        current=-current if flip_current else current,
        temp=num[:, 18:22],
        source=source,
        line=np.arange(2, len(df) + 2),
    )


def _slow_parse(text: str, header: list[str], flip_current: bool, source: str) -> ParseResult:
    samples: list[TelemetrySample] = []
    lines: list[int] = []
    rejections: list[Rejection] = []
    rows = csv.reader(io.StringIO(text))
    header_seen = False
    for row in rows:
        line_no = rows.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if not header_seen:
            header_seen = True
            continue
        if len(row) != len(header):
            kind = RejectionKind.MISSING_FIELD if len(row) < len(header) else RejectionKind.MALFORMED_FIELD
            field_name = header[len(row)] if len(row) < len(header) else "<row>"
            rejections.append(
                Rejection(kind, field_name, f"expected {len(header)} fields, got {len(row)}", line_no, source)
            )
            continue
        result = validate_sample(dict(zip(header, (c.strip() for c in row))), flip_current=flip_current)
        if isinstance(result, Rejection):
            rejections.append(
                Rejection(result.kind, result.field, result.reason, line_no, source)
            )
        else:
            samples.append(result)
            lines.append(line_no)
    return ParseResult(SampleBatch.from_samples(samples, source=source, line=lines or None), rejections)


def parse_bms_csv(stream: IO | bytes | str, *, source: str = "", flip_current: bool = False) -> ParseResult:
    """Parse one BMS CSV file. Malformed rows are logged with their line number.

    Raises EmptyFile for a file without content and UnreadableHeader when the
    header row is missing or incomplete.
    """
    text = _read_text(stream)
    header = _check_header(text)
    batch = _fast_parse(text, header, flip_current, source)
    if batch is not None:
        return ParseResult(batch)
    result = _slow_parse(text, header, flip_current, source)
    for rej in result.rejections:
        log.debug("%s:%s rejected %s (%s): %s", source, rej.line, rej.field, rej.kind.value, rej.reason)
    return result


def read_bms_file(path: str | Path, flip_current: bool = False, source: str | None = None) -> ParseResult:
    path = Path(path)
    with open(path, "rb") as fh:
        return parse_bms_csv(fh, source=source or path.name, flip_current=flip_current)


def _read_job(args) -> ParseResult | Exception:
    path, flip_current, source = args
    try:
        return read_bms_file(path, flip_current, source)
    except TelemetryError as exc:
        return exc


def read_bms_files(
    paths: Sequence[str | Path], *, flip_current: bool = False, workers: int = 1
) -> tuple[list[ParseResult], dict[str, str]]:
    """Parse many files, optionally on a process pool; output order follows ``paths``.

    Returns the parse results and a map of source name to error message for
    files that could not be read at all.
    """
    paths = [Path(p) for p in paths]
    names = [p.name for p in paths]
    if len(set(names)) != len(names):
        names = [str(p) for p in paths]
    jobs = [(p, flip_current, n) for p, n in zip(paths, names)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_read_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        outcomes = [_read_job(j) for j in jobs]
    results, failures = [], {}
    for name, outcome in zip(names, outcomes):
        if isinstance(outcome, Exception):
            failures[name] = f"{type(outcome).__name__}: {outcome}"
            log.warning("skipping %s: %s", name, outcome)
        else:
            results.append(outcome)
    return results, failures


def merge_series(file_batches: Iterable[SampleBatch]) -> TimeSeries:
    """Merge batches into one strictly increasing series.

    Rows are ordered by (timestamp, source name, source line); among rows with
    an identical timestamp only the first in that order is kept. The result
    therefore does not depend on batch order or on how rows were partitioned.
    """
    batches = [b for b in file_batches if len(b)]
    if not batches:
        return TimeSeries.empty()

    counts: dict[str, int] = {}
    for b in batches:
        counts[b.source] = counts.get(b.source, 0) + len(b)
    provenance = tuple({"source": s, "rows": counts[s]} for s in sorted(counts))

    batches.sort(key=lambda b: (b.t[0], b.source, b.line[0]))
    disjoint = all(
        np.all(np.diff(b.t) > 0) and (k == 0 or b.t[0] > batches[k - 1].t[-1])
        for k, b in enumerate(batches)
    )
    cols = {
        "t": np.concatenate([b.t for b in batches]),
        "v_total": np.concatenate([b.v_total for b in batches]),
        "current": np.concatenate([b.current for b in batches]),
        "v_cell": np.concatenate([b.v_cell for b in batches]),
        "temp": np.concatenate([b.temp for b in batches]),
    }
    line = np.concatenate([b.line for b in batches])
    if not disjoint:
        ranks = {s: i for i, s in enumerate(sorted(counts))}
        src = np.concatenate([np.full(len(b), ranks[b.source], dtype=np.int64) for b in batches])
        order = np.lexsort((line, src, cols["t"]))
        ts = cols["t"][order]
        keep = np.empty(len(ts), dtype=bool)
        keep[0] = True
        np.not_equal(ts[1:], ts[:-1], out=keep[1:])
        order = order[keep]
        for name in list(cols):
            cols[name] = cols[name][order]
        line = line[order]
    return TimeSeries(**cols, source="merged", line=line, provenance=provenance)


def _fold_stats(t: np.ndarray, v: np.ndarray, period: float, n_phase: int) -> float:
    bins = ((t % period) * (n_phase / period)).astype(np.int64)
    np.clip(bins, 0, n_phase - 1, out=bins)
    n_b = np.bincount(bins, minlength=n_phase)
    s_b = np.bincount(bins, weights=v, minlength=n_phase)
    nz = n_b > 0
    return float(np.sum(s_b[nz] ** 2 / n_b[nz]))


def periodicity_score(series: TimeSeries, period: float = DEFAULT_PERIOD, n_phase: int = N_PHASE) -> float:
    """Fraction of total-voltage variance explained by phase within ``period``.

    The series is folded into ``n_phase`` bins; the score is
    1 - (pooled within-bin variance / total variance), in [0, 1].
    A constant signal scores 0 and raises a DegenerateVariance warning.
    """
    if not len(series):
        raise ValueError("periodicity_score needs a non-empty series")
    if not period > 0:
        raise ValueError("period must be positive")
    return _score(series.t, series.v_total, period, n_phase)


def _score(t: np.ndarray, v: np.ndarray, period: float, n_phase: int) -> float:
    vc = v - v.mean()
    sst = float(np.dot(vc, vc))
    if sst <= 1e-12 * max(1.0, float(np.dot(v, v))):
        warnings.warn("total voltage is constant", DegenerateVariance, stacklevel=3)
        return 0.0
    ssb = _fold_stats(t, vc, period, n_phase)
    return min(1.0, max(0.0, ssb / sst))


@dataclass(frozen=True)
class DriftModel:
    """Affine clock correction: corrected(t) = t - total_shift * (t - t_start) / (t_end - t_start)."""

    reference_time: float  # t_start, fixed point of the correction
    end_time: float
    total_shift: float

    def __post_init__(self):
        if not (math.isfinite(self.reference_time) and math.isfinite(self.end_time) and math.isfinite(self.total_shift)):
            raise ValueError("drift model must be finite")
        if self.total_shift and not self.end_time > self.reference_time:
            raise ValueError("drift model needs end_time > reference_time")

    @property
    def span_days(self) -> float:
        return (self.end_time - self.reference_time) / SECONDS_PER_DAY

    @property
    def rate(self) -> float:
        """Seconds of drift per day."""
        return self.total_shift / self.span_days if self.span_days > 0 else 0.0

    def correct(self, t: np.ndarray) -> np.ndarray:
        if self.total_shift == 0:
            return np.asarray(t, dtype=np.float64)
        frac = (np.asarray(t, dtype=np.float64) - self.reference_time) / (self.end_time - self.reference_time)
        return t - self.total_shift * frac

    def as_dict(self) -> dict:
        return {
            "reference_time": self.reference_time,
            "end_time": self.end_time,
            "total_shift_s": self.total_shift,
            "rate_s_per_day": self.rate,
            "span_days": self.span_days,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DriftModel":
        return cls(float(d["reference_time"]), float(d["end_time"]), float(d["total_shift_s"]))


@dataclass(frozen=True)
class DriftSearch:
    lo: float = -21600.0
    hi: float = 21600.0
    step: float = 60.0
    refine_step: float = 5.0
    refine_steps: int = 2  # refine within +-refine_steps coarse steps


def _best(shifts: np.ndarray, scores: np.ndarray) -> float:
    top = scores.max()
    tied = shifts[scores >= top - 1e-12]
    # tie-break toward the smallest |shift|, then toward the negative side
    return float(sorted(tied, key=lambda s: (abs(s), s))[0])


def estimate_drift(
    series: TimeSeries,
    search: DriftSearch = DriftSearch(),
    period: float = DEFAULT_PERIOD,
    n_phase: int = N_PHASE,
    max_points: int = SCORE_MAX_POINTS,
) -> DriftModel:
    """Grid-search the total clock shift that makes the data most periodic.

    Scores are evaluated on an evenly strided subsample of at most
    ``max_points`` samples to keep the search cheap on multi-million-row series.
    """
    if len(series) < 2:
        raise SpanTooShort("need at least two samples")
    t0, t1 = series.span
    if t1 - t0 < MIN_DRIFT_SPAN_DAYS * SECONDS_PER_DAY:
        raise SpanTooShort(f"span {(t1 - t0) / SECONDS_PER_DAY:.1f} d < {MIN_DRIFT_SPAN_DAYS} d")

    stride = max(1, math.ceil(len(series) / max_points))
    t = series.t[::stride]
    v = series.v_total[::stride]
    vc = v - v.mean()
    sst = float(np.dot(vc, vc))
    if sst <= 1e-12 * max(1.0, float(np.dot(v, v))):
        warnings.warn("total voltage is constant", DegenerateVariance, stacklevel=2)
        return DriftModel(t0, t1, 0.0)
    frac = (t - t0) / (t1 - t0)

    def scores_for(shifts: np.ndarray) -> np.ndarray:
        return np.array([_fold_stats(t - s * frac, vc, period, n_phase) / sst for s in shifts])

    k_lo = math.ceil(search.lo / search.step)
    k_hi = math.floor(search.hi / search.step)
    coarse = np.arange(k_lo, k_hi + 1) * search.step
    best = _best(coarse, scores_for(coarse))

    n_fine = int(round(search.refine_steps * search.step / search.refine_step))
    fine = best + np.arange(-n_fine, n_fine + 1) * search.refine_step
    best = _best(fine, scores_for(fine))
    model = DriftModel(t0, t1, best)
    log.info("drift estimate: total shift %.0f s (%.2f s/day)", model.total_shift, model.rate)
    return model


def apply_drift_correction(series: TimeSeries, model: DriftModel) -> TimeSeries:
    """Re-time samples with the affine drift map; values and order are untouched."""
    if model.total_shift == 0 or not len(series):
        return series
    if abs(model.total_shift) >= model.end_time - model.reference_time:
        raise NonMonotonicResult(f"|rate| {abs(model.rate):.0f} s/day would invert sample order")
    t = model.correct(series.t)
    if len(t) > 1 and not np.all(np.diff(t) > 0):
        raise NonMonotonicResult("correction produced non-increasing timestamps")
    return series.with_times(t)


# consolidated series file: an uncompressed zip of .npy columns with fixed
# member timestamps, so identical inputs give byte-identical files

_SERIES_COLUMNS = ("t", "v_total", "v_cell", "current", "temp")


def save_series(series: TimeSeries, path: str | Path) -> None:
    path = Path(path)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED, allowZip64=True) as zf:
        for name in _SERIES_COLUMNS:
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.ascontiguousarray(getattr(series, name)), allow_pickle=False)


def load_series(path: str | Path) -> TimeSeries:
    with np.load(Path(path), allow_pickle=False) as data:
        return TimeSeries(**{name: data[name] for name in _SERIES_COLUMNS}, source=Path(path).name)


def manifest_path(series_path: str | Path) -> Path:
    series_path = Path(series_path)
    return series_path.with_name(series_path.stem + ".manifest.json")


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
