"""Reading inputs and writing self-describing JSON artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import MissingInput, ParseError

SCHEMA_VERSION = 1


def sha256_of(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError as exc:
        raise MissingInput(f"no such file: {path}") from exc


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError as exc:
        raise MissingInput(f"no such file: {path}") from exc


def read_json(path) -> dict:
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from exc


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2) + "\n"


def write_json(path, payload: dict):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(payload))


def artifact(kind: str, inputs: dict, params: dict, result: dict) -> dict:
    """Standard envelope: what was computed, from which files, with which settings."""
    return {
        "schema": f"caus.{kind}/{SCHEMA_VERSION}",
        "kind": kind,
        "inputs": {name: {"path": str(p), "sha256": sha256_of(p)} for name, p in inputs.items()},
        "params": params,
        "result": result,
    }


def read_history(path):
    """Parse a history CSV into (period, covariates (N, n), uncertainty (N, m))."""
    text = read_text(path)
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError("empty file", path, 1, 1)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "period":
        raise ParseError("first column must be 'period'", path, 1, 1)
    cov = [i for i, h in enumerate(header) if h.startswith("covariate_")]
    unc = [i for i, h in enumerate(header) if h.startswith("uncertainty_")]
    if not cov or not unc or len(cov) + len(unc) + 1 != len(header):
        raise ParseError("header must be period, covariate_1..n, uncertainty_1..m", path, 1, 1)
    if cov != list(range(1, len(cov) + 1)):
        raise ParseError("covariate columns must precede uncertainty columns", path, 1, 1)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, lineno, 1)
        values = []
        col = 1
        for field in row:
            try:
                v = float(field)
            except ValueError:
                raise ParseError(f"not a number: {field!r}", path, lineno, col) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value: {field!r}", path, lineno, col)
            values.append(v)
            col += len(field) + 1
        data.append(values)
    if not data:
        raise ParseError("no observations", path, 2, 1)
    arr = np.array(data)
    return arr[:, 0].astype(int), arr[:, cov], arr[:, unc]


def write_csv(path, header, rows):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
