"""CSV emission and ingestion: locale-independent, full float precision,
atomic writes (temp file + rename in the target directory)."""

from __future__ import annotations

import os
import tempfile

import numpy as np

from .errors import EitlockError


class ArtifactIOError(EitlockError):
    """File emission failed; message carries the path."""


def _format(x: float) -> str:
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def write_csv(path, header, columns) -> int:
    """Write named columns; returns the number of data rows.

    header: sequence of column names (units encoded in the name).
    columns: equal-length sequences; may be empty for a header-only file.
    """
    header = list(header)
    cols = [np.asarray(c, dtype=float) for c in columns]
    if len(cols) != len(header):
        raise ValueError("one column per header entry required")
    n = cols[0].size if cols else 0
    for c in cols:
        if c.size != n:
            raise ValueError("columns must have equal length")
    try:
        directory = os.path.dirname(os.path.abspath(path)) or "."
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(header) + "\n")
                for i in range(n):
                    fh.write(",".join(_format(c[i]) for c in cols) + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return n


def read_csv(path):
    """Read back a file produced by write_csv: (header list, column arrays)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
    if not lines:
        raise ArtifactIOError(f"cannot read {path}: empty file")
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line]
    cols = [np.array([float(r[i]) for r in rows]) for i in range(len(header))]
    return header, cols
