"""Plain-text matrix files.

Line 1 holds ``rows cols``; each following line holds one row of
whitespace-separated decimal literals. Values are written with Python's
shortest round-trip ``repr`` so write-then-read is bit-exact.
"""

from __future__ import annotations

import os

import numpy as np

from .exceptions import MatrixFormatError
from .matrix import DenseMatrix


def format_matrix(m: DenseMatrix) -> str:
    lines = [f"{m.rows} {m.cols}"]
    for row in m.data:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str, *, allow_nonfinite: bool = False) -> DenseMatrix:
    lines = [(no, line) for no, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise MatrixFormatError("empty matrix file", line=1)
    header_no, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise MatrixFormatError(f"header must be 'rows cols', got {header.strip()!r}", line=header_no)
    try:
        rows, cols = int(parts[0]), int(parts[1])
    except ValueError:
        raise MatrixFormatError(f"header must hold two integers, got {header.strip()!r}", line=header_no) from None
    if rows < 1 or cols < 1:
        raise MatrixFormatError(f"dimensions must be positive, got {rows}x{cols}", line=header_no)

    body = lines[1:]
    if len(body) != rows:
        last = body[-1][0] if body else header_no
        raise MatrixFormatError(f"expected {rows} rows, found {len(body)}", line=last)

    values = np.empty((rows, cols))
    for i, (no, line) in enumerate(body):
        fields = line.split()
        if len(fields) != cols:
            raise MatrixFormatError(f"expected {cols} values, found {len(fields)}", line=no)
        col_pos = 0
        for j, field in enumerate(fields):
            col_pos = line.index(field, col_pos) + 1
            try:
                v = float(field)
            except ValueError:
                raise MatrixFormatError(f"not a number: {field!r}", line=no, column=col_pos) from None
            if not allow_nonfinite and not np.isfinite(v):
                raise MatrixFormatError(f"non-finite value {field!r}", line=no, column=col_pos)
            values[i, j] = v
            col_pos += len(field) - 1
    if allow_nonfinite:
        return DenseMatrix.corrupted(values)
    return DenseMatrix(values)


def read_matrix(path: str | os.PathLike, *, allow_nonfinite: bool = False) -> DenseMatrix:
    with open(path, encoding="utf-8") as fh:
        return parse_matrix(fh.read(), allow_nonfinite=allow_nonfinite)


def write_matrix(path: str | os.PathLike, m: DenseMatrix) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_matrix(m))
