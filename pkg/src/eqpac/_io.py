"""Atomic file output and fixed-precision CSV helpers."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path


def fmt(v) -> str:
    """Decimal encoding at 17 significant digits; ints and strings pass through."""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float) or hasattr(v, "dtype") and v.dtype.kind == "f":
        return format(float(v), ".17g")
    return str(v)


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    write_text_atomic(path, rows_to_csv(header, rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
