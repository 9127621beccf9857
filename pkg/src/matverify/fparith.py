"""Error-free transformations and an emulated fused multiply-add for binary64.

Python 3.10 has no ``math.fma`` and numpy exposes no fused ufunc, so the
single-rounding ``x*y + z`` is rebuilt from exact pieces:

* ``two_prod`` splits ``x*y`` into ``hi + lo`` exactly (Veltkamp/Dekker),
* ``two_sum`` does the same for an addition (Knuth),
* the low-order parts are combined with round-to-odd, after which a single
  round-to-nearest gives the correctly rounded result (Boldo & Melquiond).

All functions are elementwise over numpy arrays (scalars broadcast).
Exactness assumes no intermediate overflow (|operands| below ~2**995) and
no underflow in the product's low part (|x*y| above ~2**-969).
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    """Return ``(s, e)`` with ``s = fl(a + b)`` and ``s + e == a + b`` exactly."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def split(a):
    """Veltkamp split of ``a`` into 26-bit halves, ``hi + lo == a``."""
    c = _SPLITTER * a
    hi = c - (c - a)
    lo = a - hi
    return hi, lo


def two_prod(a, b, a_split=None, b_split=None):
    """Return ``(p, e)`` with ``p = fl(a * b)`` and ``p + e == a * b`` exactly.

    Pre-computed splits may be passed when one operand is reused.
    """
    p = a * b
    ah, al = split(a) if a_split is None else a_split
    bh, bl = split(b) if b_split is None else b_split
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def add_round_odd(a, b):
    """``a + b`` rounded to odd: exact if representable, else the odd neighbour."""
    s, e = two_sum(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    bits = np.asarray(s).view(np.int64)
    even = (bits & 1) == 0
    bump = even & (e != 0)
    if np.any(bump):
        s = np.where(bump, np.nextafter(s, np.copysign(np.inf, e)), s)
    return s


def fma(x, y, z, x_split=None, y_split=None):
    """Correctly rounded ``x*y + z`` (one rounding), elementwise."""
    uh, ul = two_prod(x, y, x_split, y_split)
    th, tl = two_sum(z, uh)
    v = add_round_odd(tl, ul)
    return th + v
