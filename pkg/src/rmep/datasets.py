"""Small published test instances used by the examples, the CLI and the tests."""

import numpy as np

from .linear import RectPencil
from .poly import QuadR2EP

__all__ = ["linear_example", "quadratic_example", "ARMA11_Y", "LTI2_Y"]

# 12-point series for the ARMA(1,1) fit
ARMA11_Y = np.array([
    2.4130, 1.0033, 1.2378, -0.72191, -0.81745, -2.2918,
    0.18213, 0.073557, 0.55248, 2.0180, 2.6593, 1.1791,
])

# 10-point series for the LTI(2) fit
LTI2_Y = np.array([
    0.69582, 0.68195, -0.24647, 0.50437, -0.23207,
    0.34559, -0.19628, 0.20553, -0.17737, 0.11543,
])


def linear_example() -> RectPencil:
    """3x2 two-parameter pencil with three eigenvalues."""
    a = np.array([[1, 2], [3, 4], [3, 1]], dtype=float)
    b = np.array([[1, 3], [5, 1], [1, 4]], dtype=float)
    c = np.array([[4, 1], [1, 3], [4, 1]], dtype=float)
    return RectPencil.linear(a, [b, c])


def quadratic_example() -> QuadR2EP:
    """3x2 quadratic two-parameter problem with twelve eigenvalues."""
    return QuadR2EP(
        np.array([[1, 2], [3, 4], [3, 1]], dtype=float),
        np.array([[1, 3], [5, 1], [1, 4]], dtype=float),
        np.array([[4, 1], [1, 3], [4, 1]], dtype=float),
        np.array([[2, 3], [1, 1], [1, 2]], dtype=float),
        np.array([[1, 1], [2, 2], [2, 3]], dtype=float),
        np.array([[3, 1], [3, 2], [1, 2]], dtype=float),
    )
