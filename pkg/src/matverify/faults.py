"""Declarative faults injected into a claimed product ``C``.

Grammar accepted by :func:`parse_fault`::

    element:<row>,<col>,<delta>
    rowswap:<i1>,<i2>
    colswap:<j1>,<j2>
    bitflip:<row>,<col>,<bit>
    sparse:<row>,<col>,<delta>[;<row>,<col>,<delta>]*
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DomainError
from .matrix import SEPARATE, AccumulationMode, DenseMatrix, check_product_shapes, oracle_multiply, subtract


def _check_delta(delta: float) -> None:
    if not np.isfinite(delta) or delta == 0:
        raise DomainError(f"perturbation must be finite and nonzero, got {delta!r}")


def _check_cell(shape, row, col) -> None:
    rows, cols = shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise DomainError(f"cell ({row}, {col}) outside a {rows}x{cols} matrix")


@dataclass(frozen=True)
class ElementPerturb:
    row: int
    col: int
    delta: float

    def __post_init__(self):
        _check_delta(self.delta)

    def validate(self, shape) -> None:
        _check_cell(shape, self.row, self.col)

    def to_grammar(self) -> str:
        return f"element:{self.row},{self.col},{self.delta!r}"


@dataclass(frozen=True)
class RowSwap:
    i1: int
    i2: int

    def __post_init__(self):
        if self.i1 == self.i2:
            raise DomainError(f"swap indices must differ, got {self.i1} twice")

    def validate(self, shape) -> None:
        for i in (self.i1, self.i2):
            if not 0 <= i < shape[0]:
                raise DomainError(f"row {i} outside a matrix with {shape[0]} rows")

    def to_grammar(self) -> str:
        return f"rowswap:{self.i1},{self.i2}"


@dataclass(frozen=True)
class ColSwap:
    j1: int
    j2: int

    def __post_init__(self):
        if self.j1 == self.j2:
            raise DomainError(f"swap indices must differ, got {self.j1} twice")

    def validate(self, shape) -> None:
        for j in (self.j1, self.j2):
            if not 0 <= j < shape[1]:
                raise DomainError(f"column {j} outside a matrix with {shape[1]} columns")

    def to_grammar(self) -> str:
        return f"colswap:{self.j1},{self.j2}"


@dataclass(frozen=True)
class BitFlip:
    row: int
    col: int
    bit: int

    def __post_init__(self):
        if not 0 <= self.bit <= 63:
            raise DomainError(f"bit index must be in 0..63, got {self.bit}")

    def validate(self, shape) -> None:
        _check_cell(shape, self.row, self.col)

    def to_grammar(self) -> str:
        return f"bitflip:{self.row},{self.col},{self.bit}"


@dataclass(frozen=True)
class SparsePerturb:
    cells: tuple  # ((row, col, delta), ...)

    def __post_init__(self):
        cells = tuple((int(r), int(c), float(d)) for r, c, d in self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells:
            raise DomainError("sparse fault needs at least one cell")
        seen = set()
        for r, c, d in cells:
            _check_delta(d)
            if (r, c) in seen:
                raise DomainError(f"cell ({r}, {c}) listed twice")
            seen.add((r, c))

    def validate(self, shape) -> None:
        for r, c, _ in self.cells:
            _check_cell(shape, r, c)

    def to_grammar(self) -> str:
        return "sparse:" + ";".join(f"{r},{c},{d!r}" for r, c, d in self.cells)


FaultSpec = Union[ElementPerturb, RowSwap, ColSwap, BitFlip, SparsePerturb]


def flip_bit(value: float, bit: int) -> float:
    (bits,) = struct.unpack("<Q", struct.pack("<d", value))
    (out,) = struct.unpack("<d", struct.pack("<Q", bits ^ (1 << bit)))
    return out


def apply_fault(c: DenseMatrix, spec: FaultSpec) -> tuple[DenseMatrix, bool]:
    """Return ``(faulted copy, neutral)``.

    ``neutral`` is true when the result is bitwise identical to ``c``. A bit
    flip may produce NaN or Inf; such matrices are returned as-is.
    """
    spec.validate(c.shape)
    data = np.array(c.data)
    if isinstance(spec, ElementPerturb):
        data[spec.row, spec.col] += spec.delta
    elif isinstance(spec, RowSwap):
        data[[spec.i1, spec.i2]] = data[[spec.i2, spec.i1]]
    elif isinstance(spec, ColSwap):
        data[:, [spec.j1, spec.j2]] = data[:, [spec.j2, spec.j1]]
    elif isinstance(spec, BitFlip):
        data[spec.row, spec.col] = flip_bit(float(data[spec.row, spec.col]), spec.bit)
    elif isinstance(spec, SparsePerturb):
        for r, col, d in spec.cells:
            data[r, col] += d
    else:
        raise DomainError(f"unknown fault spec {spec!r}")
    faulted = DenseMatrix.corrupted(data)
    return faulted, faulted.bitwise_equal(c)


def delta_of(a: DenseMatrix, b: DenseMatrix, c_faulted: DenseMatrix, mode: AccumulationMode = SEPARATE) -> DenseMatrix:
    """``oracle(A @ B) - C'``, the error matrix the verifiers must expose."""
    check_product_shapes(a, b, c_faulted)
    return subtract(oracle_multiply(a, b, mode), c_faulted)


def adversarial_paired_columns(shape, magnitude: float = 1.0, j1: int = 0, j2: int = 1) -> SparsePerturb:
    """Fault whose error matrix has column ``j1`` = ``d``, column ``j2`` = ``-d``.

    With 0/1 projection vectors the residual ``(w_j1 - w_j2) d`` vanishes
    exactly when the two picks agree, so a single Freivalds round misses it
    with probability 1/2.
    """
    rows, cols = shape
    if cols < 2:
        raise DomainError("paired-column fault needs at least two columns")
    cells = []
    for i in range(rows):
        cells.append((i, j1, -magnitude))
        cells.append((i, j2, magnitude))
    return SparsePerturb(tuple(cells))


def _ints(text: str, count: int, kind: str) -> list[int]:
    parts = text.split(",")
    if len(parts) != count:
        raise DomainError(f"{kind} fault expects {count} comma-separated fields, got {text!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise DomainError(f"{kind} fault has a non-integer index in {text!r}") from None


def _triple(text: str, kind: str) -> tuple[int, int, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise DomainError(f"{kind} fault expects <row>,<col>,<delta>, got {text!r}")
    try:
        return int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise DomainError(f"malformed {kind} fault fields {text!r}") from None


def parse_fault(text: str) -> FaultSpec:
    kind, sep, body = text.strip().partition(":")
    if not sep or not body:
        raise DomainError(f"fault must look like '<kind>:<fields>', got {text!r}")
    if kind == "element":
        return ElementPerturb(*_triple(body, kind))
    if kind == "rowswap":
        return RowSwap(*_ints(body, 2, kind))
    if kind == "colswap":
        return ColSwap(*_ints(body, 2, kind))
    if kind == "bitflip":
        return BitFlip(*_ints(body, 3, kind))
    if kind == "sparse":
        return SparsePerturb(tuple(_triple(cell, kind) for cell in body.split(";")))
    raise DomainError(f"unknown fault kind {kind!r}")
