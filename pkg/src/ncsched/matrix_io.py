"""Self-describing plain-text matrix files.

Each entry is a header line ``matrix <name> <rows> <cols>`` followed by
``rows`` lines of whitespace-separated values in row-major order. Values
are written with ``repr`` so a dump/load round trip is bit-exact. Lines
starting with ``#`` are comments.
"""
from __future__ import annotations

import io
import os
from typing import IO, Mapping

import numpy as np


class MatrixFormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return repr(float(v))


def dumps_matrices(matrices: Mapping[str, np.ndarray], header: str | None = None) -> str:
    out = io.StringIO()
    if header:
        for line in header.splitlines():
            out.write(f"# {line}\n")
    for name, value in matrices.items():
        if any(c.isspace() for c in name) or not name:
            raise MatrixFormatError(f"invalid matrix name {name!r}")
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2:
            raise MatrixFormatError(f"{name}: only 0-, 1- and 2-d arrays are supported")
        rows, cols = arr.shape
        out.write(f"matrix {name} {rows} {cols}\n")
        for row in arr:
            out.write(" ".join(_fmt(v) for v in row) + "\n")
    return out.getvalue()


def loads_matrices(text: str) -> dict[str, np.ndarray]:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    result: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "matrix":
            raise MatrixFormatError(f"expected 'matrix <name> <rows> <cols>', got {lines[i]!r}")
        name = parts[1]
        try:
            rows, cols = int(parts[2]), int(parts[3])
        except ValueError as exc:
            raise MatrixFormatError(f"bad shape in header {lines[i]!r}") from exc
        if name in result:
            raise MatrixFormatError(f"duplicate matrix {name!r}")
        body = lines[i + 1 : i + 1 + rows]
        if len(body) != rows:
            raise MatrixFormatError(f"{name}: expected {rows} rows, file ended early")
        data = np.empty((rows, cols))
        for r, line in enumerate(body):
            vals = line.split()
            if len(vals) != cols:
                raise MatrixFormatError(f"{name}: row {r} has {len(vals)} values, expected {cols}")
            data[r] = [float(v) for v in vals]
        result[name] = data
        i += 1 + rows
    return result


def save_matrices(path: str | os.PathLike, matrices: Mapping[str, np.ndarray], header: str | None = None) -> None:
    text = dumps_matrices(matrices, header)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write matrix file {os.fspath(path)!r}: {exc}") from exc


def load_matrices(path: str | os.PathLike | IO[str]) -> dict[str, np.ndarray]:
    if hasattr(path, "read"):
        return loads_matrices(path.read())
    with open(path) as fh:
        return loads_matrices(fh.read())
