"""Domain types shared by every stage of the telemetry pipeline.

Sign convention: charge current is positive, discharge negative.
Timestamps are UTC epoch seconds (float, sub-second allowed).
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, Iterator

import numpy as np

N_CELLS = 16
N_TEMPS = 4

# plausibility gates, deliberately wider than the operating window so that
# faulty cells (e.g. 0.967 V) are still ingested
V_TOTAL_GATE = (0.0, 80.0)
V_CELL_GATE = (0.0, 5.0)

CELL_COLUMNS = tuple(f"V{n:02d}" for n in range(1, N_CELLS + 1))
TEMP_COLUMNS = tuple(f"T{n}" for n in range(1, N_TEMPS + 1))
CSV_COLUMNS = ("time", "V_tot", *CELL_COLUMNS, "I", *TEMP_COLUMNS)
NUMERIC_COLUMNS = CSV_COLUMNS[1:]


class TelemetryError(Exception):
    """Base class for errors raised by this package."""


@dataclass(frozen=True)
class TelemetrySample:
    timestamp: float
    v_total: float
    v_cell: tuple[float, ...]
    current: float
    temp: tuple[float, ...]

    def __post_init__(self):
        if len(self.v_cell) != N_CELLS:
            raise ValueError(f"expected {N_CELLS} cell voltages, got {len(self.v_cell)}")
        if len(self.temp) != N_TEMPS:
            raise ValueError(f"expected {N_TEMPS} temperatures, got {len(self.temp)}")


@dataclass(frozen=True)
class BatterySystemSpec:
    nominal_capacity: float = 250.0  # Ah
    nominal_voltage: float = 48.0
    series_count: int = 16
    parallel_count: int = 5
    cell_v_min: float = 2.5
    cell_v_max: float = 3.65
    recommended_temp_range: tuple[float, float] = (15.0, 35.0)
    max_cell_temp_spread: float = 5.0

    def __post_init__(self):
        if not self.nominal_capacity > 0:
            raise ValueError("nominal_capacity must be > 0")
        if self.series_count < 1 or self.parallel_count < 1:
            raise ValueError("series_count and parallel_count must be >= 1")
        if not self.cell_v_min < self.cell_v_max:
            raise ValueError("cell_v_min must be below cell_v_max")


class RejectionKind(enum.Enum):
    MALFORMED_FIELD = "MalformedField"
    OUT_OF_PLAUSIBLE_RANGE = "OutOfPlausibleRange"
    MISSING_FIELD = "MissingField"


@dataclass(frozen=True)
class Rejection:
    kind: RejectionKind
    field: str
    reason: str
    line: int | None = None
    source: str | None = None

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "field": self.field,
            "reason": self.reason,
            "line": self.line,
            "source": self.source,
        }


def parse_timestamp(value: Any) -> float:
    """UTC epoch seconds from a ``YYYY-MM-DD HH:MM:SS[.fff]`` string, datetime or number."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, (int, float, np.floating, np.integer)) and not isinstance(value, bool):
        ts = float(value)
        if not math.isfinite(ts):
            raise ValueError("non-finite timestamp")
        return ts
    else:
        dt = datetime.fromisoformat(str(value).strip())
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def format_timestamp(ts: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    if dt.microsecond:
        return dt.strftime("%Y-%m-%d %H:%M:%S.") + f"{dt.microsecond // 1000:03d}"
    return dt.strftime("%Y-%m-%d %H:%M:%S")


def _number(raw: Any, name: str) -> float | Rejection:
    if isinstance(raw, bool):
        return Rejection(RejectionKind.MALFORMED_FIELD, name, f"boolean {raw!r} is not numeric")
    if raw is None or (isinstance(raw, str) and not raw.strip()):
        return Rejection(RejectionKind.MISSING_FIELD, name, "empty value")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        return Rejection(RejectionKind.MALFORMED_FIELD, name, f"not numeric: {raw!r}")
    if math.isnan(value):
        return Rejection(RejectionKind.MALFORMED_FIELD, name, "NaN")
    if math.isinf(value):
        return Rejection(RejectionKind.OUT_OF_PLAUSIBLE_RANGE, name, f"infinite value {value}")
    return value


def _in_gate(value: float, gate: tuple[float, float]) -> bool:
    return gate[0] <= value <= gate[1]


def validate_sample(raw: Mapping[str, Any] | Sequence[Any], *, flip_current: bool = False) -> TelemetrySample | Rejection:
    """Turn a raw record into a sample, or a typed rejection. Never raises.

    ``raw`` is either a mapping keyed by the CSV column names or a positional
    sequence in CSV column order (time first).
    """
    try:
        if isinstance(raw, Mapping):
            record = raw
        elif isinstance(raw, Sequence) and not isinstance(raw, (str, bytes)):
            if len(raw) < len(CSV_COLUMNS):
                missing = CSV_COLUMNS[len(raw)]
                return Rejection(
                    RejectionKind.MISSING_FIELD,
                    missing,
                    f"expected {len(CSV_COLUMNS)} fields, got {len(raw)}",
                )
            if len(raw) > len(CSV_COLUMNS):
                return Rejection(
                    RejectionKind.MALFORMED_FIELD,
                    "<row>",
                    f"expected {len(CSV_COLUMNS)} fields, got {len(raw)}",
                )
            record = dict(zip(CSV_COLUMNS, raw))
        else:
            return Rejection(RejectionKind.MALFORMED_FIELD, "<row>", f"unsupported record type {type(raw).__name__}")

        for name in CSV_COLUMNS:
            if name not in record:
                return Rejection(RejectionKind.MISSING_FIELD, name, "field absent")

        raw_time = record["time"]
        if raw_time is None or (isinstance(raw_time, str) and not raw_time.strip()):
            return Rejection(RejectionKind.MISSING_FIELD, "time", "empty value")
        try:
            ts = parse_timestamp(raw_time)
        except (TypeError, ValueError, OverflowError, OSError) as exc:
            return Rejection(RejectionKind.MALFORMED_FIELD, "time", f"bad timestamp {raw_time!r}: {exc}")

        values = {}
        for name in NUMERIC_COLUMNS:
            value = _number(record[name], name)
            if isinstance(value, Rejection):
                return value
            values[name] = value

        if not _in_gate(values["V_tot"], V_TOTAL_GATE):
            return Rejection(
                RejectionKind.OUT_OF_PLAUSIBLE_RANGE, "V_tot", f"{values['V_tot']} V outside {V_TOTAL_GATE}"
            )
        for name in CELL_COLUMNS:
            if not _in_gate(values[name], V_CELL_GATE):
                return Rejection(
                    RejectionKind.OUT_OF_PLAUSIBLE_RANGE, name, f"{values[name]} V outside {V_CELL_GATE}"
                )

        current = -values["I"] if flip_current else values["I"]
        return TelemetrySample(
            timestamp=ts,
            v_total=values["V_tot"],
            v_cell=tuple(values[c] for c in CELL_COLUMNS),
            current=current,
            temp=tuple(values[c] for c in TEMP_COLUMNS),
        )
    except Exception as exc:  # totality: anything unexpected is still a typed rejection
        return Rejection(RejectionKind.MALFORMED_FIELD, "<row>", f"unparseable record: {exc!r}")


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    # read-only view; avoids copying multi-million-row columns
    out = np.ascontiguousarray(arr, dtype=dtype).view()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Columnar block of samples with no ordering guarantee (one parsed file).

    Behaves like a read-only sequence of :class:`TelemetrySample`.
    ``line`` holds the 1-based source line of each row; ``source`` names the file.
    """

    t: np.ndarray
    v_total: np.ndarray
    v_cell: np.ndarray
    current: np.ndarray
    temp: np.ndarray
    source: str = ""
    line: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.t)
        object.__setattr__(self, "t", _frozen(self.t, np.float64))
        object.__setattr__(self, "v_total", _frozen(self.v_total, np.float64))
        object.__setattr__(self, "current", _frozen(self.current, np.float64))
        object.__setattr__(self, "v_cell", _frozen(np.reshape(self.v_cell, (n, N_CELLS)), np.float32))
        object.__setattr__(self, "temp", _frozen(np.reshape(self.temp, (n, N_TEMPS)), np.float32))
        line = np.arange(1, n + 1) if self.line is None else self.line
        object.__setattr__(self, "line", _frozen(line, np.int64))
        for name in ("v_total", "current", "line"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")

    @classmethod
    def empty(cls, source: str = "") -> "SampleBatch":
        return cls(np.empty(0), np.empty(0), np.empty((0, N_CELLS)), np.empty(0), np.empty((0, N_TEMPS)), source)

    @classmethod
    def from_samples(cls, samples: Sequence[TelemetrySample], source: str = "", line=None) -> "SampleBatch":
        if not samples:
            return cls.empty(source)
        return cls(
            t=np.array([s.timestamp for s in samples]),
            v_total=np.array([s.v_total for s in samples]),
            v_cell=np.array([s.v_cell for s in samples]),
            current=np.array([s.current for s in samples]),
            temp=np.array([s.temp for s in samples]),
            source=source,
            line=line,
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> TelemetrySample:
        return TelemetrySample(
            timestamp=float(self.t[i]),
            v_total=float(self.v_total[i]),
            v_cell=tuple(float(x) for x in self.v_cell[i]),
            current=float(self.current[i]),
            temp=tuple(float(x) for x in self.temp[i]),
        )

    def __iter__(self) -> Iterator[TelemetrySample]:
        for i in range(len(self)):
            yield self[i]

    def take(self, idx) -> dict:
        return dict(
            t=self.t[idx],
            v_total=self.v_total[idx],
            v_cell=self.v_cell[idx],
            current=self.current[idx],
            temp=self.temp[idx],
        )


@dataclass(frozen=True, eq=False)
class TimeSeries(SampleBatch):
    """Samples with strictly increasing timestamps plus a source manifest."""

    provenance: tuple[dict, ...] = field(default=())

    def __post_init__(self):
        super().__post_init__()
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("TimeSeries timestamps must be strictly increasing")

    @classmethod
    def empty(cls, source: str = "") -> "TimeSeries":
        return cls(np.empty(0), np.empty(0), np.empty((0, N_CELLS)), np.empty(0), np.empty((0, N_TEMPS)), source)

    @property
    def span(self) -> tuple[float, float]:
        if not len(self):
            raise ValueError("empty series has no span")
        return float(self.t[0]), float(self.t[-1])

    def between(self, start: float, end: float) -> "TimeSeries":
        """Samples with start <= t < end."""
        lo, hi = np.searchsorted(self.t, [start, end], side="left")
        return self.slice(lo, hi)

    def slice(self, lo: int, hi: int) -> "TimeSeries":
        return TimeSeries(
            **self.take(slice(lo, hi)),
            source=self.source,
            line=self.line[lo:hi],
            provenance=self.provenance,
        )

    def with_times(self, t: np.ndarray) -> "TimeSeries":
        return TimeSeries(
            t=t,
            v_total=self.v_total,
            v_cell=self.v_cell,
            current=self.current,
            temp=self.temp,
            source=self.source,
            line=self.line,
            provenance=self.provenance,
        )

    def equals(self, other: "TimeSeries") -> bool:
        return all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("t", "v_total", "v_cell", "current", "temp")
        )


class OperationPattern(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    UNCLASSIFIED = "Unclassified"


class SolarLevel(str, enum.Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"


@dataclass(frozen=True)
class DailySummary:
    date: date
    c_chg: float  # Ah
    c_dis: float
    e_chg: float  # kWh
    e_dis: float
    dt_max: float  # degC
    pattern: OperationPattern = OperationPattern.UNCLASSIFIED
    generator_on: bool = False
    solar_level: SolarLevel = SolarLevel.LOW
    n_samples: int = 0

    def __post_init__(self):
        for name in ("c_chg", "c_dis", "e_chg", "e_dis"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def delta_c(self) -> float:
        return self.c_chg - self.c_dis

    @property
    def delta_e(self) -> float:
        return self.e_chg - self.e_dis


@dataclass(frozen=True)
class ProbabilityHistogram:
    """Binned distribution. Mass outside the edges goes to ``underflow``/``overflow``.

    ``sum(probabilities) + underflow + overflow == 1`` whenever data exists.
    """

    bin_edges: tuple[float, ...]
    probabilities: tuple[float, ...]
    weight_kind: str = "time-weighted"
    underflow: float = 0.0
    overflow: float = 0.0

    def __post_init__(self):
        if len(self.probabilities) != len(self.bin_edges) - 1:
            raise ValueError("need exactly one probability per bin")
        if any(b <= a for a, b in zip(self.bin_edges, self.bin_edges[1:])):
            raise ValueError("bin edges must be strictly ascending")
        if self.weight_kind not in ("time-weighted", "count-weighted"):
            raise ValueError(f"unknown weight_kind {self.weight_kind!r}")
        probs = (*self.probabilities, self.underflow, self.overflow)
        if any(not (-1e-12 <= p <= 1 + 1e-12) for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")

    @property
    def total(self) -> float:
        return math.fsum(self.probabilities) + self.underflow + self.overflow

    def mass_above(self, x: float) -> float:
        """Probability mass in bins lying entirely at or above ``x``, plus overflow."""
        mass = self.overflow
        for lo, p in zip(self.bin_edges[:-1], self.probabilities):
            if lo >= x:
                mass += p
        return mass

    def as_dict(self) -> dict:
        return {
            "weight_kind": self.weight_kind,
            "bin_edges": list(self.bin_edges),
            "probabilities": list(self.probabilities),
            "underflow": self.underflow,
            "overflow": self.overflow,
        }


@dataclass(frozen=True)
class CostScenario:
    battery_price: float  # USD/kWh
    energy_density: float  # kWh/kg
    moving_price: float  # USD/kg
    pack_energy: float  # kWh
    service_life: float  # years
    include_moving: bool = True
    name: str = ""

    def __post_init__(self):
        for name in ("battery_price", "energy_density", "moving_price", "pack_energy", "service_life"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite number > 0, got {value!r}")
        if self.service_life < 1:
            raise ValueError("service_life must be at least 1 year")


DEFAULT_TZ_OFFSET_HOURS = 8.0  # site civil time, fixed offset, no DST


def local_day_index(t, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS):
    """Days since 1970-01-01 in local civil time for UTC epoch seconds ``t``."""
    return np.floor((np.asarray(t, dtype=np.float64) + tz_offset_hours * 3600.0) / 86400.0).astype(np.int64)


def day_start_utc(day_index, tz_offset_hours: float = DEFAULT_TZ_OFFSET_HOURS):
    """UTC epoch seconds of local midnight starting day ``day_index``."""
    return np.asarray(day_index, dtype=np.float64) * 86400.0 - tz_offset_hours * 3600.0


def day_index_to_date(day_index: int) -> date:
    return date.fromordinal(date(1970, 1, 1).toordinal() + int(day_index))


def date_to_day_index(d: date) -> int:
    return d.toordinal() - date(1970, 1, 1).toordinal()
