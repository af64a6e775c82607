"""CSV + JSON-lines output with exact float round-trip and atomic writes."""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import PomcError

_TYPES = ("int", "float", "str", "bool")


class SchemaError(PomcError, ValueError):
    pass


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` (UTF-8) via a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_value(name, kind, value):
    if kind == "float":
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise SchemaError(f"column {name!r} expects float, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
            raise SchemaError(f"column {name!r} expects int, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, (bool, np.bool_)):
            raise SchemaError(f"column {name!r} expects bool, got {value!r}")
        return bool(value)
    if not isinstance(value, str):
        raise SchemaError(f"column {name!r} expects str, got {value!r}")
    if "\x00" in value:
        raise SchemaError(f"column {name!r}: NUL characters cannot be stored in CSV")
    try:
        value.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise SchemaError(f"column {name!r}: not encodable as UTF-8") from exc
    return value


def _normalize(rows, schema):
    names = [n for n, _ in schema]
    for _, kind in schema:
        if kind not in _TYPES:
            raise SchemaError(f"unknown column type {kind!r}")
    out = []
    for row in rows:
        if isinstance(row, dict):
            if set(row) != set(names):
                raise SchemaError(f"row keys {sorted(row)} do not match schema {names}")
            values = [row[n] for n in names]
        else:
            values = list(row)
            if len(values) != len(names):
                raise SchemaError(f"row has {len(values)} fields, schema has {len(names)}")
        out.append([_check_value(n, k, v) for (n, k), v in zip(schema, values)])
    return names, out


def _quote(s: str) -> str:
    # csv.writer leaves a bare "\r" unquoted when the terminator is "\n";
    # empty strings are quoted so a one-column row never becomes a blank line
    if s == "" or any(c in s for c in ',"\r\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def format_float(x: float) -> str:
    return format(x, ".17g")


def emit_table(rows, schema, path) -> Path:
    """Write ``rows`` to ``path`` (CSV) and a ``.jsonl`` mirror next to it.

    ``schema`` is a sequence of ``(column, type)`` with type one of
    int/float/str/bool. Floats use 17 significant digits; NaN and infinities
    are written as ``nan``/``inf`` in CSV and ``null`` in JSON.
    """
    schema = [(str(n), str(k)) for n, k in schema]
    names, data = _normalize(rows, schema)
    lines = [",".join(_quote(n) for n in names)]
    for row in data:
        lines.append(",".join(format_float(v) if k == "float" else
                              ("true" if v else "false") if k == "bool" else
                              str(v) if k == "int" else _quote(v)
                              for v, (_, k) in zip(row, schema)))
    path = Path(path)
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    lines = []
    for row in data:
        rec = {n: (None if isinstance(v, float) and not math.isfinite(v) else v)
               for n, v in zip(names, row)}
        lines.append(json.dumps(rec, allow_nan=False))
    atomic_write_text(path.with_suffix(".jsonl"), "".join(line + "\n" for line in lines))
    return path


def read_table(path, schema=None) -> list:
    """Read a CSV written by :func:`emit_table`; typed if ``schema`` given."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if schema is None:
        return [dict(zip(header, r)) for r in rows]
    kinds = dict(schema)
    if list(kinds) != header:
        raise SchemaError(f"header {header} does not match schema {list(kinds)}")
    conv = {"int": int, "float": float, "str": str, "bool": lambda s: s == "true"}
    return [{h: conv[kinds[h]](v) for h, v in zip(header, r)} for r in rows]
