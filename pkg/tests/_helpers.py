"""Shared instances and comparison helpers for the test suite."""

import numpy as np

from rmep.linear import RectPencil
from rmep.poly import QuadR2EP

# printed 4-decimal values
LINEAR_EXAMPLE_EIGS = np.array([[2.6393, 3.0435], [-1.3577, 0.4365], [0.4553, -1.8007]])
LINEAR_EXAMPLE_SPURIOUS = np.array([-0.3571, -1.2143])

_QUAD_ROWS = [
    # (lambda, mu) with the sign pattern of the printed table
    ((-7.5148, 10.2523), (-3.8435, -2.4388)),
    ((-7.6951, 1.3198), (6.3264, 2.2203)),
    ((0.3122, 0.1675), (-0.6460, -1.2328)),
    ((-0.1483, 0.8975), (-0.8786, 0.1559)),
    ((-0.8086, 0.3135), (-0.1788, 0.6154)),
]


def quadratic_example_eigs() -> np.ndarray:
    vals = []
    for (lr, li), (mr, mi) in _QUAD_ROWS:
        vals.append([lr + 1j * li, mr + 1j * mi])
        vals.append([lr - 1j * li, mr - 1j * mi])
    vals += [[0.6829, 0.7594], [-0.9391, -1.0037]]
    return np.array(vals, dtype=complex)


def random_pencil(rng, n, k, complex_=False) -> RectPencil:
    def m():
        a = rng.standard_normal((n + k - 1, n))
        if complex_:
            a = a + 1j * rng.standard_normal((n + k - 1, n))
        return a

    return RectPencil.linear(m(), [m() for _ in range(k)])


def random_quad(rng, n) -> QuadR2EP:
    return QuadR2EP(*[rng.standard_normal((n + 1, n)) for _ in range(6)])


def pair_up(a, b):
    """Greedy nearest pairing of the rows of a and b; returns b reordered to match a."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    b = np.atleast_2d(np.asarray(b, dtype=complex))
    assert a.shape == b.shape, f"sizes differ: {a.shape} vs {b.shape}"
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    out = np.empty_like(b)
    for _ in range(len(a)):
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        out[i] = b[j]
        dist[i, :] = np.inf
        dist[:, j] = np.inf
    return out


def max_abs_mismatch(a, b) -> float:
    """Largest componentwise absolute difference after pairing."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if a.size == 0 and np.size(b) == 0:
        return 0.0
    return float(np.max(np.abs(a - pair_up(a, b))))
