"""Moment CSV, sample files, density tables and JSON reports.

Every writer goes through :func:`atomic_write`, so a failed run never
leaves a half-written file behind.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .problem import MomentProblem

MOMENT_HEADER = ("alpha", "mu")


class FileFormatError(ValueError):
    """Input file exists but its contents cannot be parsed."""


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any float64."""
    return f"{float(x):.17g}"


def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def moments_csv(p: MomentProblem) -> str:
    return csv_text(MOMENT_HEADER, zip(p.alphas, p.mus))


def write_moments(path, p: MomentProblem) -> None:
    atomic_write(path, moments_csv(p))


def read_moment_columns(path):
    """``(alphas, mus)`` as float arrays, in file order."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows or tuple(c.strip() for c in rows[0]) != MOMENT_HEADER:
        raise FileFormatError(f"{path}: expected header 'alpha,mu'")
    alphas, mus = [], []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise FileFormatError(f"{path}: row {n} has {len(row)} fields, expected 2")
        try:
            alphas.append(float(row[0]))
            mus.append(float(row[1]))
        except ValueError:
            raise FileFormatError(f"{path}: row {n} is not numeric") from None
    if not alphas:
        raise FileFormatError(f"{path}: no moment rows")
    return np.array(alphas), np.array(mus)


def read_moments(path, label=None) -> MomentProblem:
    alphas, mus = read_moment_columns(path)
    return MomentProblem(alphas, mus, label=label or Path(path).name)


def read_samples(path) -> np.ndarray:
    """One value per line; ``#`` starts a comment, blank lines are skipped."""
    values = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise FileFormatError(f"{path}: line {n} is not a number") from None
    return np.array(values, dtype=np.float64)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def json_text(doc: dict) -> str:
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False) + "\n"


def write_json(path, doc: dict) -> None:
    atomic_write(path, json_text(doc))
