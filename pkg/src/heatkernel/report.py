"""CSV tables: formatting, atomic writes and parsing."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import numpy as np

COLUMNS = (
    "scenario",
    "theorem_case",
    "t",
    "abs_x",
    "abs_y",
    "oracle_p",
    "structural",
    "fitted_C",
    "fitted_b",
    "ratio",
    "verdict",
)
FLOAT_COLUMNS = frozenset(COLUMNS) - {"scenario", "theorem_case", "verdict"}


def fmt(v) -> str:
    """Floats with 9 significant digits; None and NaN become empty."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, str):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        f = float(v)
        if math.isnan(f):
            return ""
        return format(f, ".9g")
    return str(v)


def to_csv(columns, rows) -> str:
    """Rows are dicts keyed by column or sequences in column order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        values = [row.get(c) for c in columns] if isinstance(row, dict) else row
        w.writerow([fmt(v) for v in values])
    return buf.getvalue()


def report_rows(reports):
    """One row per sample of every FitReport."""
    for r in reports:
        for s, ratio in zip(r.samples, r.ratios):
            yield {
                "scenario": r.scenario,
                "theorem_case": r.case,
                "t": s.t,
                "abs_x": s.abs_x,
                "abs_y": s.abs_y,
                "oracle_p": s.oracle,
                "structural": s.estimate.structural,
                "fitted_C": r.C,
                "fitted_b": r.b,
                "ratio": ratio,
                "verdict": r.verdict,
            }


def emit_table(reports) -> str:
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    return to_csv(COLUMNS, report_rows(reports))


def parse_table(text: str) -> list[dict]:
    """Inverse of :func:`emit_table`; empty fields come back as None."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        rec = {}
        for k, v in row.items():
            if v == "":
                rec[k] = None
            elif k in FLOAT_COLUMNS:
                rec[k] = float(v)
            else:
                rec[k] = v
        out.append(rec)
    return out


def write_atomic(path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path
