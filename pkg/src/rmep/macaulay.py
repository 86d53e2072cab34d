"""Block Macaulay matrices of rectangular matrix polynomials.

Used as a baseline and as an independent oracle on small instances; nothing
here is meant to scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .compress import memory_cap
from .linalg import DEFAULT_TOL, EigSet, ToleranceConfig, joint_commuting_eigs, numerical_rank, robust_svd
from .linear import RectPencil, attach_residuals

__all__ = [
    "MacaulayMatrix",
    "DegreeTooLowError",
    "monomials",
    "mac_size",
    "build_macaulay",
    "NullspaceProfile",
    "nullspace_profile",
    "mac_solve_small",
]

MAX_NULLITY = 200


class DegreeTooLowError(RuntimeError):
    """The nullspace has not stabilised at the requested degree."""


def monomials(k: int, m: int) -> list[tuple[int, ...]]:
    """Exponents of all monomials of degree <= m in k variables.

    Degree-graded, lexicographic within a degree: ``1, l1, l2, l1^2, l1 l2, l2^2, ...``.
    """
    out = []
    for deg in range(m + 1):
        for combo in itertools.combinations_with_replacement(range(k), deg):
            w = [0] * k
            for i in combo:
                w[i] += 1
            out.append(tuple(w))
    return out


def mac_size(n: int, k: int, m: int, d: int = 1) -> tuple[int, int]:
    """Size of the degree-m block Macaulay matrix of a degree-d RMEP with
    ``(n+k-1) x n`` coefficients."""
    if d < 1 or m < d:
        raise ValueError(f"degree m must be at least the pencil degree {d}")
    return (n + k - 1) * math.comb(m - d + k, k), n * math.comb(m + k, k)


@dataclass
class MacaulayMatrix:
    """Dense block Macaulay matrix with its monomial labels.

    Block row ``row_monomials[a]`` times column block ``col_monomials[b]``
    holds ``A_w`` whenever ``col = row + w``.
    """

    degree: int
    row_monomials: list
    col_monomials: list
    block_shape: tuple
    data: np.ndarray

    @property
    def shape(self):
        return self.data.shape

    def col_block(self, w) -> slice:
        j = self.col_monomials.index(tuple(w))
        n = self.block_shape[1]
        return slice(j * n, (j + 1) * n)

    def vandermonde(self, lam, x) -> np.ndarray:
        """``[l^w x]`` stacked over the column monomials; lies in the nullspace at an eigenpair."""
        lam = np.asarray(lam, dtype=complex)
        x = np.asarray(x, dtype=complex)
        return np.concatenate([np.prod(lam ** np.asarray(w)) * x for w in self.col_monomials])


def build_macaulay(pencil: RectPencil, m: int, mem_cap: int | None = None) -> MacaulayMatrix:
    """Degree-m block Macaulay matrix of ``pencil``."""
    d = pencil.degree
    if m < d:
        raise ValueError(f"degree m={m} is below the pencil degree {d}")
    rows_mono = monomials(pencil.k, m - d)
    cols_mono = monomials(pencil.k, m)
    p, n = pencil.shape
    shape = (p * len(rows_mono), n * len(cols_mono))
    cap = memory_cap() if mem_cap is None else mem_cap
    dtype = np.result_type(pencil.dtype, float)
    if shape[0] * shape[1] * np.dtype(dtype).itemsize > cap:
        raise MemoryError(f"Macaulay matrix {shape[0]}x{shape[1]} exceeds the memory cap of {cap} bytes")
    col_of = {w: j for j, w in enumerate(cols_mono)}
    data = np.zeros(shape, dtype=dtype)
    for a, tau in enumerate(rows_mono):
        for w, coef in pencil.terms.items():
            b = col_of[tuple(t + e for t, e in zip(tau, w))]
            data[a * p:(a + 1) * p, b * n:(b + 1) * n] = coef
    return MacaulayMatrix(m, rows_mono, cols_mono, (p, n), data)


def _null_basis(mac: MacaulayMatrix, tol: float):
    """Nullspace basis and its rows for monomials of degree below ``mac.degree``."""
    _, s, vh = robust_svd(mac.data)
    Z = vh[numerical_rank(s, tol):].conj().T
    low = [w for w in mac.col_monomials if sum(w) < mac.degree]
    return Z, low


def _rows(mac, Z, ws):
    return np.concatenate([Z[mac.col_block(w)] for w in ws])


def _separates(mac, Z, low, tol) -> bool:
    if Z.shape[1] == 0:
        return True
    base = _rows(mac, Z, low)
    return numerical_rank(robust_svd(base, compute_uv=False), tol) == Z.shape[1]


@dataclass
class NullspaceProfile:
    """Nullity per degree and the first degree that allows extraction.

    ``separated[j]`` tells whether the low-degree rows of the nullspace
    basis have full column rank at ``degrees[j]``.  ``stable_degree`` is the
    first degree that is separated and from which the nullity stays constant
    up to the last degree; ``None`` if there is none.
    """

    degrees: list
    nullities: list
    separated: list
    stable_degree: int | None

    @property
    def count(self) -> int | None:
        """Nullity at the stabilisation degree."""
        if self.stable_degree is None:
            return None
        return self.nullities[self.degrees.index(self.stable_degree)]


def nullspace_profile(pencil: RectPencil, m_max: int, tol: float = 1e-10, mem_cap=None) -> NullspaceProfile:
    """Measure the nullity of the Macaulay matrix for degrees ``d..m_max``."""
    degrees = list(range(pencil.degree, m_max + 1))
    if not degrees:
        raise ValueError("m_max is below the pencil degree")
    nullities, separated = [], []
    for m in degrees:
        mac = build_macaulay(pencil, m, mem_cap)
        Z, low = _null_basis(mac, tol)
        nullities.append(Z.shape[1])
        separated.append(_separates(mac, Z, low, tol))
    stable = None
    for j, m in enumerate(degrees[:-1]):
        if separated[j] and all(v == nullities[j] for v in nullities[j:]):
            stable = m
            break
    return NullspaceProfile(degrees, nullities, separated, stable)


def mac_solve_small(pencil: RectPencil, m: int, cfg: ToleranceConfig = DEFAULT_TOL, seed=None) -> EigSet:
    """Eigenvalues from the nullspace of the degree-m Macaulay matrix.

    With ``Z`` a nullspace basis, ``S1 Z`` keeps the rows of monomials of
    degree < m and ``Si Z`` the same rows multiplied by ``l_i``.  The
    matrices ``pinv(S1 Z) Si Z`` commute and share the eigenvalues; they are
    solved jointly (random linear shift) and filtered by the rank test.
    """
    mac = build_macaulay(pencil, m)
    Z, low = _null_basis(mac, cfg.stair_tol)
    nullity = Z.shape[1]
    if nullity == 0:
        return EigSet(np.zeros((0, pencil.k)))
    if nullity > MAX_NULLITY:
        raise ValueError(f"nullity {nullity} is too large for the dense extraction")
    if not _separates(mac, Z, low, cfg.stair_tol):
        raise DegreeTooLowError(f"nullspace not stabilised at degree {m}; raise m")
    base = _rows(mac, Z, low)
    eye = np.eye(pencil.k, dtype=int)
    shifts = [
        np.linalg.lstsq(base, _rows(mac, Z, [tuple(np.add(w, eye[i])) for w in low]), rcond=None)[0]
        for i in range(pencil.k)
    ]
    eigs = joint_commuting_eigs(np.eye(nullity), shifts, cfg, np.random.default_rng(seed))
    eigs = attach_residuals(pencil, eigs, cfg)
    keep = eigs.residuals < cfg.rank_tol
    out = eigs.subset(keep)
    out.extra.update(nullity=nullity, rejected=int(np.count_nonzero(~keep)))
    return out
