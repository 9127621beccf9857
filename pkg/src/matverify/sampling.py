"""Reproducible projection vectors.

Every vector is a pure function of ``(family, n, seed, stream_index, lane)``.
The Philox counter-based generator is keyed with ``(seed, stream_index)`` and
the lane selects a disjoint block of its counter space, so trials and the
iterations inside one trial never share generator state.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, RangeError

DEFAULT_SEED = 0xC0FFEE
_U64 = 1 << 64

# lanes at or above this value are reserved for matrix generation and fault
# placement in experiments; verifier iterations use lanes 0, 1, 2, ...
RESERVED_LANE = 1 << 62

POLY_R_LOW = 0.5
POLY_R_HIGH = 1.5
_TINY = np.finfo(np.float64).tiny

_local = threading.local()


@dataclass(frozen=True)
class SeededStream:
    seed: int = DEFAULT_SEED
    stream_index: int = 0
    lane: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_index", "lane"):
            value = getattr(self, name)
            if not (0 <= value < _U64):
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value}")

    def generator(self) -> np.random.Generator:
        """A fresh, independently owned generator positioned at this stream."""
        bitgen = np.random.Philox(
            key=self.seed | (self.stream_index << 64),
            counter=[0, 0, 0, self.lane],
        )
        return np.random.Generator(bitgen)

    def _scratch(self) -> np.random.Generator:
        # Re-keys a per-thread generator; constructing a new Philox costs
        # more than the draw for small n. Callers must consume it at once.
        try:
            gen, state = _local.gen, _local.state
        except AttributeError:
            gen = _local.gen = np.random.Generator(np.random.Philox(0))
            state = _local.state = {
                "bit_generator": "Philox",
                "state": {"counter": np.zeros(4, dtype=np.uint64), "key": np.zeros(2, dtype=np.uint64)},
                "buffer": np.zeros(4, dtype=np.uint64),
                "buffer_pos": 4,
                "has_uint32": 0,
                "uinteger": 0,
            }
        inner = state["state"]
        inner["counter"][3] = self.lane
        key = inner["key"]
        key[0] = self.seed
        key[1] = self.stream_index
        gen.bit_generator.state = state
        return gen

    def with_lane(self, lane: int) -> "SeededStream":
        return SeededStream(self.seed, self.stream_index, lane)


class Family(enum.Enum):
    GAUSSIAN = "gaussian"
    BINARY = "binary"
    POLYNOMIAL = "polynomial"


@dataclass(frozen=True, eq=False)
class ProjectionVector:
    values: np.ndarray
    family: Family
    provenance: SeededStream
    r: Optional[float] = None

    def __len__(self):
        return self.values.shape[0]


def _check_n(n: int) -> None:
    if n < 1:
        raise DomainError(f"vector length must be positive, got {n}")


def _frozen(values: np.ndarray) -> np.ndarray:
    values.flags.writeable = False
    return values


def sample_gaussian(n: int, stream: SeededStream) -> ProjectionVector:
    """``n`` i.i.d. standard normal entries (numpy's ziggurat sampler)."""
    _check_n(n)
    values = stream._scratch().standard_normal(n)
    return ProjectionVector(_frozen(values), Family.GAUSSIAN, stream)


def sample_binary(n: int, stream: SeededStream) -> ProjectionVector:
    """``n`` i.i.d. fair draws from {0.0, 1.0}."""
    _check_n(n)
    values = stream._scratch().integers(0, 2, size=n).astype(np.float64)
    return ProjectionVector(_frozen(values), Family.BINARY, stream)


def polynomial_powers(n: int, r: float) -> np.ndarray:
    """``(1, r, r**2, ..., r**(n-1))`` by repeated multiplication."""
    _check_n(n)
    values = np.empty(n)
    v = 1.0
    for j in range(n):
        values[j] = v
        v = v * r
    if not np.all(np.isfinite(values)):
        raise RangeError(f"r={r!r}: powers up to r**{n - 1} overflow binary64")
    # subnormal powers lose precision and can stall short of zero under
    # round-to-nearest, so anything below the smallest normal is an underflow
    if r != 0 and np.any(np.abs(values) < _TINY):
        raise RangeError(f"r={r!r}: powers up to r**{n - 1} underflow binary64")
    return values


def sample_polynomial(n: int, stream: SeededStream, r: Optional[float] = None) -> ProjectionVector:
    """Powers of ``r`` with ``r`` uniform on [0.5, 1.5].

    ``r`` may be forced for testing; the stream is then recorded but unused.
    """
    _check_n(n)
    if r is None:
        r = float(stream._scratch().uniform(POLY_R_LOW, POLY_R_HIGH))
    values = polynomial_powers(n, float(r))
    return ProjectionVector(_frozen(values), Family.POLYNOMIAL, stream, r=float(r))


SAMPLERS = {
    Family.GAUSSIAN: sample_gaussian,
    Family.BINARY: sample_binary,
    Family.POLYNOMIAL: sample_polynomial,
}
