"""Atomic file output and round-trippable CSV/JSON readers and writers."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write ``text`` to a temporary file in the target directory, then rename it."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_float(v: float) -> str:
    """17 significant digits: enough for an exact binary64 round trip."""
    return "%.17g" % v


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, header: Sequence[str], rows) -> Path:
    return atomic_write_text(path, csv_text(header, rows))


def write_columns(path: str | Path, columns: dict[str, Sequence]) -> Path:
    """Write equal-length columns, one CSV column per key."""
    names = list(columns)
    lengths = {len(columns[k]) for k in names}
    if len(lengths) > 1:
        raise ValueError(f"columns differ in length: {sorted(lengths)}")
    return write_csv(path, names, zip(*(columns[k] for k in names)))


def read_csv(path: str | Path) -> dict[str, list[str]]:
    """Columns of a CSV file as raw strings, keyed by header name."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV file") from None
        cols: dict[str, list[str]] = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols


def read_float_columns(path: str | Path, required: Sequence[str] = ()) -> dict[str, NDArray[np.float64]]:
    cols = read_csv(path)
    missing = [c for c in required if c not in cols]
    if missing:
        raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
    out = {}
    for k, v in cols.items():
        try:
            out[k] = np.array([float(s) for s in v], dtype=float)
        except ValueError:
            continue
    return out


def _json_default(o: Any):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _sanitize(o: Any):
    # JSON has no NaN/inf; store them as strings and restore on read
    if isinstance(o, float) and not math.isfinite(o):
        return repr(o)
    if isinstance(o, dict):
        return {k: _sanitize(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_sanitize(v) for v in o]
    return o


def json_text(obj: Any) -> str:
    obj = json.loads(json.dumps(obj, default=_json_default, allow_nan=True))
    return json.dumps(_sanitize(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj: Any) -> Path:
    return atomic_write_text(path, json_text(obj))


def _restore(o: Any):
    if isinstance(o, str) and o in ("nan", "inf", "-inf"):
        return float(o)
    if isinstance(o, dict):
        return {k: _restore(v) for k, v in o.items()}
    if isinstance(o, list):
        return [_restore(v) for v in o]
    return o


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return _restore(json.load(fh))
