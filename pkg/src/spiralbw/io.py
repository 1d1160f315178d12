"""Serialization: density-matrix text files, coincidence CSV, JSON reports."""
from __future__ import annotations

import csv
import io
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError
from .measurement import CoincidenceRecord
from .qstate import DensityMatrix

RECORD_COLUMNS = ("setting_s1", "setting_s2", "theta_s1", "theta_s2", "counts", "duration_s", "seed")


def fmt(x) -> str:
    """17 significant digits, which round-trips every double."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def _label_token(label) -> str:
    return ":".join(str(int(v)) for v in label) if isinstance(label, tuple) else str(int(label))


def _parse_label(token: str):
    parts = token.split(":")
    return tuple(int(p) for p in parts) if len(parts) > 1 else int(parts[0])


def dumps_density(rho: DensityMatrix) -> str:
    """Line 1: dimension. Line 2: labels. Then one row per line as ``re im`` pairs."""
    lines = [str(rho.dim), " ".join(_label_token(l) for l in rho.labels)]
    for row in rho.matrix:
        lines.append(" ".join(f"{fmt(z.real)} {fmt(z.imag)}" for z in row))
    return "\n".join(lines) + "\n"


def loads_density(text: str, check: bool = True) -> DensityMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    try:
        d = int(lines[0])
        labels = [_parse_label(t) for t in lines[1].split()]
        values = [float(v) for ln in lines[2:] for v in ln.split()]
    except (IndexError, ValueError) as exc:
        raise DomainError(f"malformed density-matrix file: {exc}") from None
    if len(labels) != d or len(values) != 2 * d * d:
        raise DomainError("density-matrix file does not match its declared dimension")
    arr = np.asarray(values).reshape(d, d, 2)
    return DensityMatrix(labels, arr[..., 0] + 1j * arr[..., 1], check=check)


def write_density(path, rho: DensityMatrix) -> None:
    Path(path).write_text(dumps_density(rho))


def read_density(path, check: bool = True) -> DensityMatrix:
    return loads_density(Path(path).read_text(), check)


def dumps_records(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([r.setting_s1, r.setting_s2, fmt(r.theta_s1), fmt(r.theta_s2), fmt(r.counts), fmt(r.duration_s), r.seed])
    return buf.getvalue()


def _maybe_float(s):
    return float(s) if s.strip() else None


def _count(s):
    v = float(s)
    return int(v) if v.is_integer() else v


def loads_records(text: str) -> list[CoincidenceRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
        raise DomainError(f"expected columns {','.join(RECORD_COLUMNS)}")
    out = []
    for row in reader:
        out.append(
            CoincidenceRecord(
                row["setting_s1"],
                row["setting_s2"],
                _count(row["counts"]),
                float(row["duration_s"]),
                int(row["seed"]),
                _maybe_float(row["theta_s1"]),
                _maybe_float(row["theta_s2"]),
            )
        )
    return out


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def load_schema(name: str) -> dict:
    return json.loads(resources.files("spiralbw").joinpath("schemas").joinpath(f"{name}.schema.json").read_text())
