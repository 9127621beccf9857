"""Dense binary64 matrices, reference arithmetic and the round-off tolerance policy."""

from __future__ import annotations

import contextvars
import enum
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .exceptions import DimensionError, DomainError
from .fparith import fma, split

UNIT_ROUNDOFF = 2.0**-53


class AccumulationMode(enum.Enum):
    """How ``acc := acc + a*b`` is rounded inside inner products."""

    SEPARATE = "separate"  # round the product, then round the sum
    FMA = "fma"  # a single rounding per step

    @classmethod
    def parse(cls, value) -> "AccumulationMode":
        if value.__class__ is cls:
            return value
        if isinstance(value, bool):
            return cls.FMA if value else cls.SEPARATE
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"accumulation mode must be 'separate' or 'fma', got {value!r}") from None


SEPARATE = AccumulationMode.SEPARATE
FMA = AccumulationMode.FMA


class DenseMatrix:
    """Immutable row-major ``rows x cols`` matrix of binary64 values.

    The normal constructor rejects NaN and Inf. Matrices that model corrupted
    memory (a bit flip landing in the exponent, say) are built with
    :meth:`corrupted`, which skips that check.
    """

    __slots__ = ("_data", "_transpose", "_split", "_abs")

    def __init__(self, data, *, _check_finite: bool = True):
        arr = np.array(data, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 2:
            raise DimensionError(f"matrix data must be two-dimensional, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"matrix must have at least one row and column, got {arr.shape}")
        if _check_finite and not np.all(np.isfinite(arr)):
            raise DomainError("matrix entries must be finite")
        arr.flags.writeable = False
        self._data = arr
        self._transpose = None
        self._split = None
        self._abs = None

    @classmethod
    def corrupted(cls, data) -> "DenseMatrix":
        """Build a matrix that may hold NaN/Inf (fault-injection results only)."""
        return cls(data, _check_finite=False)

    @classmethod
    def from_flat(cls, rows: int, cols: int, values: Sequence[float]) -> "DenseMatrix":
        if rows < 1 or cols < 1:
            raise DimensionError(f"rows and cols must be positive, got {rows}x{cols}")
        if len(values) != rows * cols:
            raise DimensionError(f"expected {rows * cols} values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(rows, cols))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DenseMatrix":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "DenseMatrix":
        return cls(np.eye(n))

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def data(self) -> np.ndarray:
        """Read-only 2-D view of the entries."""
        return self._data

    @property
    def flat(self) -> np.ndarray:
        """Read-only row-major view of length ``rows * cols``."""
        return self._data.reshape(-1)

    @property
    def T(self) -> "DenseMatrix":
        if self._transpose is None:
            t = DenseMatrix.corrupted(self._data.T)
            t._transpose = self
            self._transpose = t
        return self._transpose

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._data)))

    def bitwise_equal(self, other: "DenseMatrix") -> bool:
        return self.shape == other.shape and np.array_equal(
            self._data.view(np.uint64), other._data.view(np.uint64)
        )

    def tolist(self) -> list[list[float]]:
        return self._data.tolist()

    def _magnitude(self) -> np.ndarray:
        if self._abs is None:
            self._abs = np.abs(self._data)
            self._abs.flags.writeable = False
        return self._abs

    def _veltkamp(self):
        if self._split is None:
            hi, lo = split(self._data)
            hi.flags.writeable = False
            lo.flags.writeable = False
            self._split = (hi, lo)
        return self._split

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    __hash__ = None

    def __repr__(self):
        return f"DenseMatrix({self._data.tolist()!r})"


# -- call audit ---------------------------------------------------------------


@dataclass
class OperationCounter:
    matvecs: int = 0
    multiplies: int = 0


_counter: contextvars.ContextVar = contextvars.ContextVar("matverify_counter", default=None)


@contextmanager
def count_operations() -> Iterator[OperationCounter]:
    """Count matvec and full-multiply calls made inside the block."""
    counter = OperationCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


# -- arithmetic -----------------------------------------------------------------


def _as_matrix(m) -> DenseMatrix:
    return m if m.__class__ is DenseMatrix else DenseMatrix(m)


def oracle_multiply(a: DenseMatrix, b: DenseMatrix, mode: AccumulationMode = SEPARATE) -> DenseMatrix:
    """Textbook triple-loop product ``a @ b``.

    Every entry is accumulated as ``c_ij := c_ij + a_il * b_lj`` for
    ``l = 0 .. p-1`` in order; the loops over ``i`` and ``j`` are vectorised
    but the summation order and rounding are exactly the scalar loop's.
    """
    a, b = _as_matrix(a), _as_matrix(b)
    mode = AccumulationMode.parse(mode)
    if a.cols != b.rows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    counter = _counter.get()
    if counter is not None:
        counter.multiplies += 1
    ad, bd = a.data, b.data
    acc = np.zeros((a.rows, b.cols))
    if mode is SEPARATE:
        for l in range(a.cols):
            acc = acc + ad[:, l : l + 1] * bd[l : l + 1, :]
    else:
        ah, al = a._veltkamp()
        bh, bl = b._veltkamp()
        for l in range(a.cols):
            x = ad[:, l : l + 1]
            y = bd[l : l + 1, :]
            acc = fma(x, y, acc, (ah[:, l : l + 1], al[:, l : l + 1]), (bh[l : l + 1, :], bl[l : l + 1, :]))
    out = DenseMatrix.corrupted(acc)
    return out


def matvec(a: DenseMatrix, x, mode: AccumulationMode = SEPARATE) -> np.ndarray:
    """Return ``a @ x`` with sequential left-to-right accumulation per row."""
    a = _as_matrix(a)
    mode = AccumulationMode.parse(mode)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != a.cols:
        raise DimensionError(f"cannot multiply {a.shape} matrix by vector of shape {x.shape}")
    return _matvec(a, x, mode)


def _matvec(a: DenseMatrix, x: np.ndarray, mode: AccumulationMode) -> np.ndarray:
    # unchecked kernel; callers validate shapes and mode
    counter = _counter.get()
    if counter is not None:
        counter.matvecs += 1
    ad = a._data
    if mode is SEPARATE:
        # add.accumulate is strictly sequential along the row: the last column
        # of the running sums is ((a_i0 x_0 + a_i1 x_1) + a_i2 x_2) + ...
        return np.add.accumulate(ad * x, axis=1)[:, -1].copy()
    # products are independent, so the exact split of every a_ij*x_j is
    # done up front; only the accumulation is sequential
    ah, al = a._veltkamp()
    xh, xl = split(x)
    acc = np.zeros(ad.shape[0])
    for j in range(ad.shape[1]):
        acc = fma(ad[:, j], x[j], acc, (ah[:, j], al[:, j]), (xh[j], xl[j]))
    return acc


def subtract(a: DenseMatrix, b: DenseMatrix) -> DenseMatrix:
    a, b = _as_matrix(a), _as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"cannot subtract {b.shape} from {a.shape}")
    return DenseMatrix.corrupted(a.data - b.data)


# -- tolerance policy -------------------------------------------------------------


class ToleranceKind(enum.Enum):
    COMPONENTWISE = "componentwise"
    ABSOLUTE = "absolute"


@dataclass(frozen=True)
class TolerancePolicy:
    """Per-component acceptance thresholds for projected residuals.

    ``COMPONENTWISE`` gives ``tau_i = slack * n * u * ((|A|(|B||w|))_i + (|C||w|)_i)``
    where ``n`` is the longest inner-product length involved. ``ABSOLUTE``
    uses ``absolute_value`` everywhere.
    """

    kind: ToleranceKind = ToleranceKind.COMPONENTWISE
    slack: float = 4.0
    absolute_value: float = 0.0
    unit_roundoff: float = UNIT_ROUNDOFF

    def __post_init__(self):
        if not (self.slack > 0 and np.isfinite(self.slack)):
            raise DomainError(f"slack must be positive and finite, got {self.slack}")
        if not (self.absolute_value >= 0 and np.isfinite(self.absolute_value)):
            raise DomainError(f"absolute_value must be nonnegative and finite, got {self.absolute_value}")
        if not (self.unit_roundoff > 0):
            raise DomainError(f"unit_roundoff must be positive, got {self.unit_roundoff}")

    @classmethod
    def absolute(cls, value: float) -> "TolerancePolicy":
        return cls(kind=ToleranceKind.ABSOLUTE, absolute_value=float(value))

    @classmethod
    def parse(cls, text: str) -> "TolerancePolicy":
        """``"auto"`` -> componentwise with slack 4, a number -> absolute."""
        if text.strip().lower() == "auto":
            return cls()
        try:
            value = float(text)
        except ValueError:
            raise DomainError(f"tolerance must be 'auto' or a number, got {text!r}") from None
        return cls.absolute(value)


DEFAULT_POLICY = TolerancePolicy()


def chain_tolerances(matrices: Sequence[DenseMatrix], c: DenseMatrix, omega, policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Tolerances for comparing ``c @ w`` against ``M1 @ (M2 @ (... @ (MN @ w)))``."""
    matrices = [_as_matrix(m) for m in matrices]
    c = _as_matrix(c)
    omega = np.asarray(omega, dtype=np.float64)
    if not matrices:
        raise DimensionError("need at least one factor")
    for left, right in zip(matrices, matrices[1:]):
        if left.cols != right.rows:
            raise DimensionError(f"chain factors {left.shape} and {right.shape} do not compose")
    if omega.ndim != 1 or omega.shape[0] != matrices[-1].cols:
        raise DimensionError(f"vector of shape {omega.shape} does not match {matrices[-1].shape}")
    if c.shape != (matrices[0].rows, matrices[-1].cols):
        raise DimensionError(f"product has shape {c.shape}, expected {(matrices[0].rows, matrices[-1].cols)}")

    if policy.kind is ToleranceKind.ABSOLUTE:
        return np.full(c.rows, policy.absolute_value)

    w = np.abs(omega)
    mag = w
    for m in reversed(matrices):
        mag = m._magnitude() @ mag
    mag = mag + c._magnitude() @ w
    longest = max([m.cols for m in matrices])
    n_eff = max(1, len(matrices) - 1) * longest
    return policy.slack * n_eff * policy.unit_roundoff * mag


def component_tolerances(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix, omega, policy: TolerancePolicy = DEFAULT_POLICY) -> np.ndarray:
    """Tolerance vector for comparing ``c @ w`` with ``a @ (b @ w)``."""
    a, b, c = _as_matrix(a), _as_matrix(b), _as_matrix(c)
    omega = np.asarray(omega, dtype=np.float64)
    check_product_shapes(a, b, c)
    if omega.ndim != 1 or omega.shape[0] != b.cols:
        raise DimensionError(f"vector of shape {omega.shape} does not match B {b.shape}")
    return _tolerances(a, b, c, omega, policy)


def _tolerances(a, b, c, omega, policy):
    if policy.kind is ToleranceKind.ABSOLUTE:
        return np.full(a._data.shape[0], policy.absolute_value)
    w = np.abs(omega)
    mag = a._magnitude() @ (b._magnitude() @ w) + c._magnitude() @ w
    return (policy.slack * max(b._data.shape) * policy.unit_roundoff) * mag


def check_product_shapes(a: DenseMatrix, b: DenseMatrix, c: DenseMatrix) -> None:
    if a.cols != b.rows:
        raise DimensionError(f"A {a.shape} and B {b.shape} do not compose")
    if c.shape != (a.rows, b.cols):
        raise DimensionError(f"C has shape {c.shape}, expected {(a.rows, b.cols)}")
