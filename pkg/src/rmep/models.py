"""ARMA(1,1) and LTI(2) identification through quadratic rectangular MEPs.

The builders assemble the optimality-condition matrices from a data vector,
the solvers enumerate every stationary point of the least-squares objective
as a real eigenvalue of a mixed square/rectangular linearisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import lstsq

from .linalg import DEFAULT_TOL, EigSet, ToleranceConfig
from .linear import RectPencil, newton_refine
from .poly import AuxiliaryPencil, mixed_solve

__all__ = [
    "StationaryPoint",
    "ModelSolution",
    "Grid",
    "build_arma11",
    "build_lti2",
    "arma11_objective",
    "lti2_objective",
    "arma11_pencil",
    "lti2_pencil",
    "solve_arma11",
    "solve_lti2",
    "solve_arma21_pipeline",
    "arma11_size",
    "lti2_size",
    "arma21_size",
    "classify_stationary",
    "contour_grid",
    "arma11_admissible",
    "lti2_admissible",
]


@dataclass
class StationaryPoint:
    params: tuple
    objective: float
    kind: str
    admissible: bool
    eigenvalue: np.ndarray = field(default=None, repr=False)


class ModelSolution(NamedTuple):
    """Result of a model solve; unpacks as ``(eigs, stationary)``."""

    eigs: EigSet
    stationary: list

    @property
    def best(self) -> StationaryPoint | None:
        """Admissible stationary point with the smallest objective."""
        pts = [p for p in self.stationary if p.admissible] or list(self.stationary)
        return min(pts, key=lambda p: p.objective) if pts else None


def _series(y, min_len: int) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size < min_len:
        raise ValueError(f"need at least {min_len} samples, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("time series contains non-finite values")
    return y


def _band(m: int, offsets) -> np.ndarray:
    out = np.zeros((m, m))
    for d in offsets:
        out += np.eye(m, k=d)
    return out


def _shift_identity_pattern(m: int) -> np.ndarray:
    """``[[0,I,0,0],[0,0,I,0],[0,0,0,I],[0],[0]]`` with ``m x m`` identities."""
    out = np.zeros((3 * m + 2, 3 * m + 1))
    for b in range(3):
        out[b * m:(b + 1) * m, 1 + b * m:1 + (b + 1) * m] = np.eye(m)
    return out


def _assemble(m: int, blocks: dict) -> np.ndarray:
    """Place blocks into the 5x4 block layout with row sizes (m,m,m,1,1) and
    column sizes (1,m,m,m)."""
    rs = [0, m, 2 * m, 3 * m, 3 * m + 1, 3 * m + 2]
    cs = [0, 1, 1 + m, 1 + 2 * m, 1 + 3 * m]
    out = np.zeros((rs[-1], cs[-1]))
    for (i, j), b in blocks.items():
        out[rs[i]:rs[i + 1], cs[j]:cs[j + 1]] = np.reshape(b, (rs[i + 1] - rs[i], cs[j + 1] - cs[j]))
    return out


def build_arma11(y):
    """Return ``(A00, A10, A01, A02)`` of size ``(3N-1) x (3N-2)``.

    Stationary points ``(alpha, gamma)`` of the ARMA(1,1) objective are real
    eigenvalues of ``(A00 + alpha A10 + gamma A01 + gamma^2 A02) x = 0``.
    """
    y = _series(y, 3)
    m = y.size - 1
    y1, y2 = y[:-1], y[1:]
    I = np.eye(m)
    R = _band(m, (-1, 1))
    A00 = _assemble(m, {
        (0, 0): y2, (0, 1): I,
        (1, 0): y1, (1, 2): I,
        (2, 1): R, (2, 3): I,
        (3, 1): y1, (3, 2): y2,
        (4, 3): y2,
    })
    A10 = _assemble(m, {(0, 0): y1, (3, 2): y1, (4, 3): y1})
    A01 = _assemble(m, {(0, 1): R, (1, 2): R, (2, 1): 2 * I, (2, 3): R})
    A02 = _shift_identity_pattern(m)
    return A00, A10, A01, A02


def arma11_pencil(y) -> RectPencil:
    A00, A10, A01, A02 = build_arma11(y)
    return RectPencil({(0, 0): A00, (1, 0): A10, (0, 1): A01, (0, 2): A02}, 2)


def build_lti2(y):
    """Return ``(A00, A10, A01, A20, A11, A02)`` of size ``(3N-4) x (3N-5)``.

    ``A20`` and ``A02`` are the same array.
    """
    y = _series(y, 4)
    m = y.size - 2
    y1, y2, y3 = y[:-2], y[1:-1], y[2:]
    I = np.eye(m)
    R = _band(m, (-1, 1))
    S = _band(m, (-2, 2))
    A00 = _assemble(m, {
        (0, 0): y3, (0, 1): I,
        (1, 0): y2, (1, 1): R, (1, 2): I,
        (2, 0): y1, (2, 1): S, (2, 3): I,
        (3, 1): y2, (3, 2): y3,
        (4, 1): y1, (4, 3): y3,
    })
    A10 = _assemble(m, {
        (0, 0): y2, (0, 1): R,
        (1, 1): 2 * I, (1, 2): R,
        (2, 1): R, (2, 3): R,
        (3, 2): y2, (4, 3): y2,
    })
    A01 = _assemble(m, {
        (0, 0): y1, (0, 1): S,
        (1, 1): R, (1, 2): S,
        (2, 1): 2 * I, (2, 3): S,
        (3, 2): y1, (4, 3): y1,
    })
    A02 = _shift_identity_pattern(m)
    # leading 1x1 block is irrelevant: the first column of A02 is zero
    blkR = np.zeros((3 * m + 1, 3 * m + 1))
    for b in range(3):
        blkR[1 + b * m:1 + (b + 1) * m, 1 + b * m:1 + (b + 1) * m] = R
    A11 = A02 @ blkR
    return A00, A10, A01, A02, A11, A02


def lti2_pencil(y) -> RectPencil:
    A00, A10, A01, A20, A11, A02 = build_lti2(y)
    return RectPencil({(0, 0): A00, (1, 0): A10, (0, 1): A01, (2, 0): A20, (1, 1): A11, (0, 2): A02}, 2)


def arma11_objective(y, alpha: float, gamma: float) -> float:
    """``||e||^2`` for the minimum-norm ``e`` with ``y_k + alpha y_{k-1} = e_k + gamma e_{k-1}``."""
    y = np.asarray(y, dtype=float).ravel()
    N = y.size
    G = np.zeros((N - 1, N))
    idx = np.arange(N - 1)
    G[idx, idx] = gamma
    G[idx, idx + 1] = 1.0
    b = y[1:] + alpha * y[:-1]
    e = lstsq(G, b)[0]
    return float(e @ e)


def lti2_objective(y, a1: float, a2: float) -> float:
    """``||y - yhat||^2`` with ``yhat`` the projection of ``y`` onto the
    solutions of ``yhat_{k+2} + a1 yhat_{k+1} + a2 yhat_k = 0``."""
    y = np.asarray(y, dtype=float).ravel()
    N = y.size
    M = np.zeros((N - 2, N))
    idx = np.arange(N - 2)
    M[idx, idx] = a2
    M[idx, idx + 1] = a1
    M[idx, idx + 2] = 1.0
    c = lstsq(M.T, y)[0]
    r = M.T @ c
    return float(r @ r)


def arma11_admissible(alpha: float, gamma: float) -> bool:
    return abs(alpha) < 1 and abs(gamma) < 1


def lti2_admissible(a1: float, a2: float) -> bool:
    return bool(np.all(np.abs(np.roots([1.0, a1, a2])) < 1))


def classify_stationary(objective: Callable, point, h: float = 1e-4) -> str:
    """Label a point by the central-difference Hessian of ``objective``.

    Returns ``"local-min"``, ``"local-max"``, ``"saddle"`` or ``"degenerate"``;
    the last also covers points whose gradient does not vanish.
    """
    x, z = map(float, point)
    f = lambda a, b: objective(a, b)  # noqa: E731
    f0 = f(x, z)
    fxp, fxm = f(x + h, z), f(x - h, z)
    fzp, fzm = f(x, z + h), f(x, z - h)
    grad = np.array([fxp - fxm, fzp - fzm]) / (2 * h)
    hxx = (fxp - 2 * f0 + fxm) / h**2
    hzz = (fzp - 2 * f0 + fzm) / h**2
    hxz = (f(x + h, z + h) - f(x + h, z - h) - f(x - h, z + h) + f(x - h, z - h)) / (4 * h**2)
    H = np.array([[hxx, hxz], [hxz, hzz]])
    if np.linalg.norm(grad) > 1e-3 * (1 + abs(f0)):
        return "degenerate"
    if abs(np.linalg.det(H)) < 1e-6 * np.linalg.norm(H) ** 2:
        return "degenerate"
    ev = np.linalg.eigvalsh(H)
    if ev[0] > 0:
        return "local-min"
    if ev[1] < 0:
        return "local-max"
    return "saddle"


@dataclass
class Grid:
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray  # values[i, j] = f(x[j], y[i])


def contour_grid(objective: Callable, xrange=(-1.0, 1.0), yrange=(-1.0, 1.0), steps: int = 51) -> Grid:
    if steps < 2:
        raise ValueError("steps must be at least 2")
    xs = np.linspace(*xrange, steps)
    ys = np.linspace(*yrange, steps)
    vals = np.array([[objective(a, b) for a in xs] for b in ys])
    return Grid(xs, ys, vals)


def _stationary_points(eigs: EigSet, objective, admissible) -> list:
    pts = []
    for lam in eigs.values[eigs.real_mask()]:
        p = tuple(float(v) for v in lam.real)
        pts.append(StationaryPoint(p, objective(*p), classify_stationary(objective, p), admissible(*p), lam))
    pts.sort(key=lambda s: s.params)
    return pts


_ONE_BELOW = [[0, 0], [1, 0]]
_ONE_ABOVE = [[0, 1], [0, 0]]
_Z2 = np.zeros((2, 2))


def solve_arma11(y, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None) -> ModelSolution:
    """All eigenvalues and the real stationary points of the ARMA(1,1) fit.

    The auxiliary 2x2 pencil ties ``xi`` to ``gamma^2`` (kernel ``[gamma, -1]``).
    """
    y = _series(y, 4)
    A00, A10, A01, A02 = build_arma11(y)
    aux = AuxiliaryPencil(
        [_ONE_BELOW, _Z2, np.eye(2), _ONE_ABOVE], index=2,
        monomial=lambda l: l[1] ** 2, kernel=lambda l: np.array([l[1], -1.0]), name="xi=gamma^2",
    )
    eigs = mixed_solve([aux], [A00, A10, A01, A02], cfg, seed, mem_cap=mem_cap)
    eigs = newton_refine(arma11_pencil(y), eigs, cfg)
    obj = lambda a, g: arma11_objective(y, a, g)  # noqa: E731
    return ModelSolution(eigs, _stationary_points(eigs, obj, arma11_admissible))


def solve_lti2(y, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None) -> ModelSolution:
    """All eigenvalues and the real stationary points of the LTI(2) fit.

    Two auxiliary pencils encode ``xi1 = a1 a2`` and ``xi2 = a1^2 + a2^2``.
    """
    y = _series(y, 4)
    A00, A10, A01, _, A11, A02 = build_lti2(y)
    aux1 = AuxiliaryPencil(
        [_ONE_BELOW, [[1, 0], [0, 0]], [[0, 0], [0, 1]], _ONE_ABOVE, _Z2], index=2,
        monomial=lambda l: l[0] * l[1], kernel=lambda l: np.array([l[1], -1.0]), name="xi1=a1*a2",
    )
    aux2 = AuxiliaryPencil(
        [_ONE_BELOW, np.eye(2), np.eye(2), [[0, 2], [0, 0]], _ONE_ABOVE], index=3,
        monomial=lambda l: l[0] ** 2 + l[1] ** 2, kernel=lambda l: np.array([l[0] + l[1], -1.0]),
        name="xi2=a1^2+a2^2",
    )
    eigs = mixed_solve([aux1, aux2], [A00, A10, A01, A11, A02], cfg, seed, mem_cap=mem_cap)
    eigs = newton_refine(lti2_pencil(y), eigs, cfg)
    obj = lambda a1, a2: lti2_objective(y, a1, a2)  # noqa: E731
    return ModelSolution(eigs, _stationary_points(eigs, obj, lti2_admissible))


def arma11_size(N: int) -> int:
    """Size of the compressed matrices for ARMA(1,1) data of length N."""
    n = 3 * N - 2
    return n * (n + 1)


def lti2_size(N: int) -> int:
    """Size of the compressed matrices for LTI(2) data of length N."""
    return 2 * (3 * N - 5) * (3 * N - 4)


def arma21_size(N: int) -> int:
    """Size of the compressed matrices for ARMA(2,1) data of length N."""
    n = 4 * N - 7
    return n * (n + 1) * (n + 2) // 3


def solve_arma21_pipeline(matrices, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None) -> EigSet:
    """Solve ``(A000 + a1 A100 + a2 A010 + g A001 + g^2 A002) x = 0``.

    ``matrices`` are the five ``(n+2) x n`` coefficients in that order; they
    are taken as given.  Returned tuples are ``(a1, a2, g)``.
    """
    mats = [np.asarray(m) for m in matrices]
    if len(mats) != 5:
        raise ValueError("expected five coefficient matrices")
    aux = AuxiliaryPencil(
        [_ONE_BELOW, _Z2, _Z2, np.eye(2), _ONE_ABOVE], index=3,
        monomial=lambda l: l[2] ** 2, kernel=lambda l: np.array([l[2], -1.0]), name="xi=gamma^2",
    )
    eigs = mixed_solve([aux], mats, cfg, seed, mem_cap=mem_cap)
    terms = dict(zip([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (0, 0, 2)], mats))
    return newton_refine(RectPencil(terms, 3), eigs, cfg)
