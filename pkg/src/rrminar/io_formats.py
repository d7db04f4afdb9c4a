"""File formats: series CSV, long-format count CSV, coefficient CSV and JSON sidecars.

All writers go through :func:`atomic_write_text` (temp file + ``os.replace``).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model import CountMatrixSeries

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SERIES_HEADER = ["t", "i", "j", "count"]
LONG_HEADER = ["date", "row_label", "col_label", "count"]
COEF_HEADER = ["i", "j", "value"]


class IngestionError(ValueError):
    pass


def atomic_write_text(path, text: str) -> None:
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


def write_json(path, payload: dict) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def series_to_csv(series: CountMatrixSeries) -> str:
    T, m, n = series.frames.shape
    t, i, j = np.meshgrid(np.arange(T), np.arange(m), np.arange(n), indexing="ij")
    rows = zip(t.ravel(), i.ravel(), j.ravel(), series.frames.ravel())
    return _csv_text(SERIES_HEADER, rows)


def series_from_csv(text: str) -> CountMatrixSeries:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != SERIES_HEADER:
        raise IngestionError(f"series CSV must start with header {','.join(SERIES_HEADER)}")
    try:
        data = np.array([[int(v) for v in row] for row in reader if row], dtype=np.int64)
    except ValueError as exc:
        raise IngestionError(f"non-integer field in series CSV: {exc}") from exc
    if data.size == 0:
        raise IngestionError("series CSV has no data rows")
    if np.any(data[:, :3] < 0):
        raise IngestionError("indices must be nonnegative")
    T, m, n = (int(data[:, k].max()) + 1 for k in range(3))
    frames = np.full((T, m, n), -1, dtype=np.int64)
    keys = data[:, 0] * (m * n) + data[:, 1] * n + data[:, 2]
    if np.unique(keys).size != keys.size:
        raise IngestionError("duplicate (t, i, j) rows in series CSV")
    if keys.size != T * m * n:
        raise IngestionError(f"series CSV has {keys.size} rows but needs {T * m * n} for a {T}x{m}x{n} series")
    frames[data[:, 0], data[:, 1], data[:, 2]] = data[:, 3]
    return CountMatrixSeries(frames)


def coefficient_to_csv(M: np.ndarray) -> str:
    M = np.asarray(M, dtype=float)
    rows = [(i, j, repr(float(M[i, j]))) for i in range(M.shape[0]) for j in range(M.shape[1])]
    return _csv_text(COEF_HEADER, rows)


def coefficient_from_csv(text: str) -> np.ndarray:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != COEF_HEADER:
        raise IngestionError(f"coefficient CSV must have header {','.join(COEF_HEADER)}")
    entries = [(int(r["i"]), int(r["j"]), float(r["value"])) for r in reader]
    rows = max(e[0] for e in entries) + 1
    cols = max(e[1] for e in entries) + 1
    M = np.zeros((rows, cols))
    for i, j, v in entries:
        M[i, j] = v
    return M


@dataclass
class LongFormatResult:
    series: CountMatrixSeries
    dates: list
    row_labels: list
    col_labels: list
    filled: int


def load_order_file(path=None) -> dict:
    """Row/column label order; ``None`` loads the bundled crime-type x district order."""
    if path is None:
        text = resources.files("rrminar").joinpath("plans", "crime_order.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    d = json.loads(text)
    return {"rows": [str(x) for x in d["rows"]], "cols": [str(x) for x in d["cols"]]}


def pivot_long_format(text: str, order: dict | None = None, max_fill_fraction: float = 0.5) -> LongFormatResult:
    """Pivot ``date,row_label,col_label,count`` rows into a matrix series.

    Rows and columns are sorted lexicographically unless ``order`` gives
    explicit label lists.  Missing (date, row, col) combinations are filled
    with zero; more than ``max_fill_fraction`` filled cells is an error.
    """
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != LONG_HEADER:
        raise IngestionError(f"long-format CSV must have header {','.join(LONG_HEADER)}")
    cells = {}
    dupes = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            date = dt.date.fromisoformat(rec["date"].strip())
        except ValueError as exc:
            raise IngestionError(f"line {lineno}: bad ISO date {rec['date']!r}") from exc
        try:
            count = int(rec["count"])
        except ValueError as exc:
            raise IngestionError(f"line {lineno}: count {rec['count']!r} is not an integer") from exc
        if count < 0:
            raise IngestionError(f"line {lineno}: negative count {count}")
        key = (date, rec["row_label"].strip(), rec["col_label"].strip())
        if key in cells:
            dupes.append(key)
        cells[key] = count
    if dupes:
        listed = ", ".join(f"({d.isoformat()}, {r}, {c})" for d, r, c in sorted(set(dupes)))
        raise IngestionError(f"duplicate (date, row_label, col_label) keys: {listed}")
    dates = sorted({k[0] for k in cells})
    if len(dates) < 2:
        raise IngestionError("long-format data must span at least two dates")
    seen_rows = sorted({k[1] for k in cells})
    seen_cols = sorted({k[2] for k in cells})
    if order is None:
        rows, cols = seen_rows, seen_cols
    else:
        rows, cols = list(order["rows"]), list(order["cols"])
        extra = sorted(set(seen_rows) - set(rows)) + sorted(set(seen_cols) - set(cols))
        if extra:
            raise IngestionError(f"labels missing from the order file: {extra}")
    r_idx = {r: i for i, r in enumerate(rows)}
    c_idx = {c: j for j, c in enumerate(cols)}
    d_idx = {d: t for t, d in enumerate(dates)}
    frames = np.zeros((len(dates), len(rows), len(cols)), dtype=np.int64)
    for (d, r, c), v in cells.items():
        frames[d_idx[d], r_idx[r], c_idx[c]] = v
    total = frames.size
    filled = total - len(cells)
    if filled:
        log.warning("zero-filled %d of %d (date, row, col) cells", filled, total)
    if filled > max_fill_fraction * total:
        raise IngestionError(
            f"{filled} of {total} cells are missing (more than {max_fill_fraction:.0%}); the data are too ragged"
        )
    return LongFormatResult(CountMatrixSeries(frames, (tuple(rows), tuple(cols))), dates, rows, cols, filled)


def series_to_long_format(series: CountMatrixSeries, dates, row_labels, col_labels) -> str:
    rows = []
    for t, d in enumerate(dates):
        for i, r in enumerate(row_labels):
            for j, c in enumerate(col_labels):
                rows.append((d.isoformat() if hasattr(d, "isoformat") else d, r, c, int(series.frames[t, i, j])))
    return _csv_text(LONG_HEADER, rows)
