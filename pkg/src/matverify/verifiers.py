"""Matrix-product verifiers.

All of them check a claimed product ``C`` of ``A`` (m x p) and ``B`` (p x n)
using matrix-vector products only, then compare the two projections
componentwise against a :class:`~matverify.matrix.TolerancePolicy`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionError, DomainError
from .matrix import (
    DEFAULT_POLICY,
    SEPARATE,
    AccumulationMode,
    DenseMatrix,
    TolerancePolicy,
    _matvec,
    _tolerances,
    chain_tolerances,
    check_product_shapes,
    component_tolerances,
    matvec,
)
from .sampling import (
    Family,
    SeededStream,
    sample_binary,
    sample_gaussian,
    sample_polynomial,
)

METHODS = ("gvfa", "freivalds", "poly", "gvfa-rowcol", "huang-abraham", "chain")


@dataclass
class Verdict:
    accepted: bool
    iterations_run: int
    max_residual: float
    residuals: list = field(default_factory=list)
    tolerances: list = field(default_factory=list)
    method: str = ""

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "accepted": self.accepted,
            "iterations_run": self.iterations_run,
            "max_residual": _json_float(self.max_residual),
            "residuals": [[_json_float(v) for v in r] for r in self.residuals],
            "tolerances": [[_json_float(v) for v in t] for t in self.tolerances],
        }


@dataclass
class ChecksumReport:
    """Checksum comparison plus the cells it implicates.

    ``mismatched_rows`` come from the row-checksum (column vector) comparison,
    ``mismatched_cols`` from the column-checksum (row vector) comparison. With
    more than one faulty cell the cartesian product over-approximates.
    """

    expected_col_checksum: np.ndarray
    actual_col_checksum: np.ndarray
    expected_row_checksum: np.ndarray
    actual_row_checksum: np.ndarray
    mismatched_rows: tuple = ()
    mismatched_cols: tuple = ()

    @property
    def implicated_cells(self) -> set:
        return {(i, j) for i in self.mismatched_rows for j in self.mismatched_cols}

    def to_dict(self) -> dict:
        return {
            "expected_col_checksum": [_json_float(v) for v in self.expected_col_checksum],
            "actual_col_checksum": [_json_float(v) for v in self.actual_col_checksum],
            "expected_row_checksum": [_json_float(v) for v in self.expected_row_checksum],
            "actual_row_checksum": [_json_float(v) for v in self.actual_row_checksum],
            "mismatched_rows": list(self.mismatched_rows),
            "mismatched_cols": list(self.mismatched_cols),
            "implicated_cells": sorted([list(c) for c in self.implicated_cells]),
        }


def _json_float(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _within(residual: np.ndarray, tol: np.ndarray) -> np.ndarray:
    # NaN on either side compares False, so corrupted inputs are rejected
    return residual <= tol


def _max_residual(residuals) -> float:
    worst = 0.0
    for r in residuals:
        top = float(r.max())
        if top != top:
            return top
        worst = max(worst, top)
    return worst


def _check_k(k: int) -> None:
    if k < 1:
        raise DomainError(f"iteration count k must be positive, got {k}")


def _projection_verify(a, b, c, k, stream, policy, mode, sampler, method) -> Verdict:
    check_product_shapes(a, b, c)
    _check_k(k)
    stream = stream or SeededStream()
    mode = AccumulationMode.parse(mode)
    residuals, tolerances = [], []
    accepted = True
    n = b.cols
    for it in range(k):
        omega = sampler(n, stream.with_lane(stream.lane + it) if it else stream).values
        c_proj = _matvec(c, omega, mode)
        ab_proj = _matvec(a, _matvec(b, omega, mode), mode)
        residual = np.abs(c_proj - ab_proj)
        tol = _tolerances(a, b, c, omega, policy)
        residuals.append(residual)
        tolerances.append(tol)
        if not (residual <= tol).all():
            accepted = False
            break  # a mismatch is conclusive
    return Verdict(accepted, len(residuals), _max_residual(residuals), residuals, tolerances, method)


def gvfa_verify(
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    k: int = 1,
    stream: Optional[SeededStream] = None,
    policy: TolerancePolicy = DEFAULT_POLICY,
    mode: AccumulationMode = SEPARATE,
) -> Verdict:
    """Gaussian-vector Freivalds check: ``C w`` vs ``A (B w)``, ``k`` rounds.

    Iteration ``t`` draws its vector from ``stream.with_lane(stream.lane + t)``.
    Costs three matvecs per round; stops at the first mismatch.
    """
    return _projection_verify(a, b, c, k, stream, policy, mode, sample_gaussian, "gvfa")


def freivalds_verify(
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    k: int = 1,
    stream: Optional[SeededStream] = None,
    policy: TolerancePolicy = DEFAULT_POLICY,
    mode: AccumulationMode = SEPARATE,
) -> Verdict:
    """Classic Freivalds check with 0/1 vectors; false-positive rate <= 2**-k."""
    return _projection_verify(a, b, c, k, stream, policy, mode, sample_binary, "freivalds")


def poly_verify(
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    k: int = 1,
    stream: Optional[SeededStream] = None,
    policy: TolerancePolicy = DEFAULT_POLICY,
    mode: AccumulationMode = SEPARATE,
) -> Verdict:
    """Projection onto ``(1, r, ..., r**(n-1))``. Experimental.

    Raises :class:`~matverify.exceptions.RangeError` when the powers leave
    binary64 range.
    """
    return _projection_verify(a, b, c, k, stream, policy, mode, sample_polynomial, "poly")


def _localize(expected_col, actual_col, col_tol, expected_row, actual_row, row_tol):
    row_ok = _within(np.abs(actual_row - expected_row), row_tol)
    col_ok = _within(np.abs(actual_col - expected_col), col_tol)
    return (
        tuple(int(i) for i in np.flatnonzero(~row_ok)),
        tuple(int(j) for j in np.flatnonzero(~col_ok)),
    )


def gvfa_rowcol_verify(
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    stream: Optional[SeededStream] = None,
    policy: TolerancePolicy = DEFAULT_POLICY,
    mode: AccumulationMode = SEPARATE,
) -> tuple[Verdict, ChecksumReport]:
    """Two-sided Gaussian check that also localizes a single faulty cell.

    ``C w_c`` vs ``A (B w_c)`` finds faulty rows, ``w_r C`` vs ``(w_r A) B``
    finds faulty columns. Six matvecs in total. ``w_c`` uses the stream's
    lane, ``w_r`` the next one.
    """
    check_product_shapes(a, b, c)
    stream = stream or SeededStream()
    mode = AccumulationMode.parse(mode)

    w_col = sample_gaussian(b.cols, stream).values
    w_row = sample_gaussian(a.rows, stream.with_lane(stream.lane + 1)).values

    actual_row = matvec(c, w_col, mode)
    expected_row = matvec(a, matvec(b, w_col, mode), mode)
    row_tol = component_tolerances(a, b, c, w_col, policy)

    # w_r C == C^T w_r and (w_r A) B == B^T (A^T w_r)
    actual_col = matvec(c.T, w_row, mode)
    expected_col = matvec(b.T, matvec(a.T, w_row, mode), mode)
    col_tol = component_tolerances(b.T, a.T, c.T, w_row, policy)

    rows, cols = _localize(expected_col, actual_col, col_tol, expected_row, actual_row, row_tol)
    residuals = [np.abs(actual_row - expected_row), np.abs(actual_col - expected_col)]
    accepted = not rows and not cols and not np.isnan(_max_residual(residuals))
    verdict = Verdict(accepted, 1, _max_residual(residuals), residuals, [row_tol, col_tol], "gvfa-rowcol")
    report = ChecksumReport(expected_col, actual_col, expected_row, actual_row, rows, cols)
    return verdict, report


def checksum_encode(a: DenseMatrix, b: DenseMatrix) -> tuple[DenseMatrix, DenseMatrix]:
    """Column-checksum-augmented ``A`` and row-checksum-augmented ``B``.

    ``A_F`` gains a last row of column sums, ``B_F`` a last column of row sums.
    """
    col_sums = np.zeros(a.cols)
    for i in range(a.rows):
        col_sums = col_sums + a.data[i]
    row_sums = np.zeros(b.rows)
    for j in range(b.cols):
        row_sums = row_sums + b.data[:, j]
    a_f = np.vstack([a.data, col_sums])
    b_f = np.hstack([b.data, row_sums[:, None]])
    return DenseMatrix.corrupted(a_f), DenseMatrix.corrupted(b_f)


def checksum_matrix(c: DenseMatrix) -> DenseMatrix:
    """``C`` bordered by its row sums (last column) and column sums (last row)."""
    data = c.data
    row_sums = np.zeros(c.rows)
    for j in range(c.cols):
        row_sums = row_sums + data[:, j]
    col_sums = np.zeros(c.cols)
    for i in range(c.rows):
        col_sums = col_sums + data[i]
    total = 0.0
    for v in row_sums:
        total += v
    top = np.hstack([data, row_sums[:, None]])
    bottom = np.append(col_sums, total)
    return DenseMatrix.corrupted(np.vstack([top, bottom]))


def huang_abraham_verify(
    a: DenseMatrix,
    b: DenseMatrix,
    c: DenseMatrix,
    mode: AccumulationMode = SEPARATE,
    policy: TolerancePolicy = DEFAULT_POLICY,
) -> tuple[Verdict, ChecksumReport]:
    """Post-hoc row/column checksum test.

    Expected checksums come from the encoded operands: the checksum row of
    ``A_F`` times ``B`` and ``A`` times the checksum column of ``B_F``. They are
    compared with the actual column and row sums of ``C``. Deterministic, and
    blind to any fault that preserves every row and column sum.
    """
    check_product_shapes(a, b, c)
    mode = AccumulationMode.parse(mode)
    a_f, b_f = checksum_encode(a, b)
    ones_n = np.ones(b.cols)
    ones_m = np.ones(a.rows)

    expected_row = matvec(a, b_f.data[:, -1], mode)
    actual_row = matvec(c, ones_n, mode)
    row_tol = component_tolerances(a, b, c, ones_n, policy)

    expected_col = matvec(b.T, a_f.data[-1], mode)
    actual_col = matvec(c.T, ones_m, mode)
    col_tol = component_tolerances(b.T, a.T, c.T, ones_m, policy)

    rows, cols = _localize(expected_col, actual_col, col_tol, expected_row, actual_row, row_tol)
    residuals = [np.abs(actual_row - expected_row), np.abs(actual_col - expected_col)]
    accepted = not rows and not cols and not np.isnan(_max_residual(residuals))
    verdict = Verdict(accepted, 1, _max_residual(residuals), residuals, [row_tol, col_tol], "huang-abraham")
    report = ChecksumReport(expected_col, actual_col, expected_row, actual_row, rows, cols)
    return verdict, report


def chain_verify(
    matrices: Sequence[DenseMatrix],
    c: DenseMatrix,
    k: int = 1,
    stream: Optional[SeededStream] = None,
    policy: TolerancePolicy = DEFAULT_POLICY,
    mode: AccumulationMode = SEPARATE,
) -> Verdict:
    """Check ``C == M1 @ M2 @ ... @ MN`` with ``N + 1`` matvecs per round."""
    matrices = list(matrices)
    if not matrices:
        raise DimensionError("chain_verify needs at least one factor")
    for left, right in zip(matrices, matrices[1:]):
        if left.cols != right.rows:
            raise DimensionError(f"chain factors {left.shape} and {right.shape} do not compose")
    if c.shape != (matrices[0].rows, matrices[-1].cols):
        raise DimensionError(f"C has shape {c.shape}, expected {(matrices[0].rows, matrices[-1].cols)}")
    _check_k(k)
    stream = stream or SeededStream()
    mode = AccumulationMode.parse(mode)

    residuals, tolerances = [], []
    accepted = True
    for it in range(k):
        omega = sample_gaussian(c.cols, stream.with_lane(stream.lane + it)).values
        c_proj = matvec(c, omega, mode)
        y = omega
        for m in reversed(matrices):
            y = matvec(m, y, mode)
        residual = np.abs(c_proj - y)
        tol = chain_tolerances(matrices, c, omega, policy)
        residuals.append(residual)
        tolerances.append(tol)
        if not np.all(_within(residual, tol)):
            accepted = False
            break
    return Verdict(accepted, len(residuals), _max_residual(residuals), residuals, tolerances, "chain")


_PROJECTION_FAMILIES = {"gvfa": Family.GAUSSIAN, "freivalds": Family.BINARY, "poly": Family.POLYNOMIAL}


def verify(method: str, a, b, c, k=1, stream=None, policy=DEFAULT_POLICY, mode=SEPARATE):
    """Dispatch by method name; returns ``(verdict, report_or_None)``."""
    if method == "gvfa":
        return gvfa_verify(a, b, c, k, stream, policy, mode), None
    if method == "freivalds":
        return freivalds_verify(a, b, c, k, stream, policy, mode), None
    if method == "poly":
        return poly_verify(a, b, c, k, stream, policy, mode), None
    if method == "gvfa-rowcol":
        return gvfa_rowcol_verify(a, b, c, stream, policy, mode)
    if method == "huang-abraham":
        return huang_abraham_verify(a, b, c, mode, policy)
    if method == "chain":
        return chain_verify([a, b], c, k, stream, policy, mode), None
    raise DomainError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")


def reference_tolerance(method: str, a, b, c, stream=None, policy=DEFAULT_POLICY) -> float:
    """Largest tolerance the method applies in its first round.

    Experiments use this as the scale of an injected fault.
    """
    stream = stream or SeededStream()
    if method in _PROJECTION_FAMILIES or method == "chain":
        family = _PROJECTION_FAMILIES.get(method, Family.GAUSSIAN)
        sampler = {Family.GAUSSIAN: sample_gaussian, Family.BINARY: sample_binary, Family.POLYNOMIAL: sample_polynomial}[family]
        omega = sampler(b.cols, stream).values
        return float(np.max(component_tolerances(a, b, c, omega, policy)))
    if method == "gvfa-rowcol":
        w_col = sample_gaussian(b.cols, stream).values
        w_row = sample_gaussian(a.rows, stream.with_lane(stream.lane + 1)).values
        return float(max(
            np.max(component_tolerances(a, b, c, w_col, policy)),
            np.max(component_tolerances(b.T, a.T, c.T, w_row, policy)),
        ))
    if method == "huang-abraham":
        return float(max(
            np.max(component_tolerances(a, b, c, np.ones(b.cols), policy)),
            np.max(component_tolerances(b.T, a.T, c.T, np.ones(a.rows), policy)),
        ))
    raise DomainError(f"unknown method {method!r}")
