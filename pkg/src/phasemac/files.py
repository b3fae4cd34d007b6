"""Atomic file output and the versioned CSV convention used by every command."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CSV_VERSION = 1


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def fmt(v) -> str:
    """Stable text form for CSV cells: repr for floats, 1/0 for booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def render_csv(schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(f"# phasemac {schema} v{CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([fmt(v) for v in row] for row in rows)
    return buf.getvalue()


def write_csv(path: str | Path, schema: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    atomic_write_text(path, render_csv(schema, header, rows))


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Parse a CSV written by :func:`write_csv`; comment lines are skipped."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header, *rows = csv.reader(lines)
    return header, rows
