"""Named matrix fixtures."""

from .matrix import DenseMatrix


def paper2x2():
    """``(A, B, C, C_swapped)``: a 2x2 product and its column-swapped corruption.

    The swap keeps every row and column sum, so checksum schemes accept it.
    """
    a = DenseMatrix([[2.0, 3.0], [3.0, 4.0]])
    b = DenseMatrix([[1.0, -6.0], [1.0, 6.0]])
    c = DenseMatrix([[5.0, 6.0], [7.0, 6.0]])
    c_swapped = DenseMatrix([[6.0, 5.0], [6.0, 7.0]])
    return a, b, c, c_swapped


FIXTURES = {"paper2x2": paper2x2}
