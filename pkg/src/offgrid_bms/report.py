"""JSON/CSV report writers.

Every report starts with a header block: output schema version, config hash
and input manifest hash. Nothing in a report comes from the wall clock, so
rerunning a command on the same inputs reproduces the files byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ProbabilityHistogram

SCHEMA_VERSION = "1"


class UnwritableOutput(OSError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def header(config_hash: str, input_hash: str, kind: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "report": kind, "config_hash": config_hash, "input_manifest_hash": input_hash}


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python numbers."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def ensure_dir(path: str | Path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritableOutput(f"cannot create {path}: {exc}") from exc
    return path


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise UnwritableOutput(f"cannot write {path}: {exc}") from exc
    return path


def write_json(path: str | Path, head: dict, body: Mapping) -> Path:
    payload = {"header": head, **_clean(body)}
    return _write(Path(path), json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "" if not math.isfinite(x) else repr(float(x))
    return str(x)


def write_csv(path: str | Path, head: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV preceded by ``# key: value`` header lines (read with ``comment='#'``)."""
    buf = io.StringIO()
    for key in sorted(head):
        buf.write(f"# {key}: {head[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return _write(Path(path), buf.getvalue())


def histogram_rows(name: str, h: ProbabilityHistogram) -> list[tuple]:
    rows = [(name, "underflow", None, h.bin_edges[0], h.underflow)]
    rows += [(name, "bin", lo, hi, p) for lo, hi, p in zip(h.bin_edges[:-1], h.bin_edges[1:], h.probabilities)]
    rows.append((name, "overflow", h.bin_edges[-1], None, h.overflow))
    return rows


HISTOGRAM_COLUMNS = ("histogram", "kind", "lo", "hi", "probability")


def read_report_csv(path: str | Path) -> tuple[dict, list[dict]]:
    """Header block and rows of a CSV written by :func:`write_csv`."""
    head, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition(": ")
                head[key] = value
            else:
                lines.append(line)
    return head, list(csv.DictReader(lines))
