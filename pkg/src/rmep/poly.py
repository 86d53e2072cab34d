"""Polynomial rectangular MEPs: eigenvalue counts, three solvers for the
quadratic two-parameter case and mixed square/rectangular linearisations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compress import compressed_deltas, symmetric_compression, vandermonde_compression
from .linalg import (
    DEFAULT_TOL,
    EigSet,
    MepSystem,
    MixedSystem,
    SingularProblemError,
    StaircaseError,
    ToleranceConfig,
    delta_family,
    robust_svd,
    staircase_regular_part,
)
from .linear import RectPencil, attach_residuals, newton_refine, orthonormal_rows

__all__ = [
    "QuadR2EP",
    "AuxiliaryPencil",
    "count_poly",
    "quadratic_linearization",
    "q2ep_project",
    "q2ep_rect_linearize",
    "q2ep_vandermonde",
    "mixed_solve",
    "refine_mixed",
]

log = logging.getLogger(__name__)

QUAD_EXPONENTS = ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

# Step bound for a second polish of tuples that fail the consistency check.
# Cluster means of defective eigenvalues can be off by far more than the
# default bound while the tuple is still a genuine eigenvalue.
RESCUE_MOVE = 1e-2


def count_poly(n: int, k: int, d: int) -> int:
    """Generic number of eigenvalues of a degree-d RMEP, ``d^k C(n+k-1, k)``."""
    if min(n, k, d) < 1:
        raise ValueError("n, k and d must be positive")
    return d**k * math.comb(n + k - 1, k)


@dataclass
class QuadR2EP:
    """``(A00 + l A10 + m A01 + l^2 A20 + l m A11 + m^2 A02) x = 0`` with ``(n+1) x n`` matrices."""

    a00: np.ndarray
    a10: np.ndarray
    a01: np.ndarray
    a20: np.ndarray
    a11: np.ndarray
    a02: np.ndarray

    def __post_init__(self):
        mats = [np.asarray(m) for m in self.matrices]
        (self.a00, self.a10, self.a01, self.a20, self.a11, self.a02) = mats
        shape = mats[0].shape
        if len(shape) != 2 or shape[0] != shape[1] + 1:
            raise ValueError(f"coefficients must be (n+1) x n, got {shape}")
        if any(m.shape != shape for m in mats):
            raise ValueError("coefficients differ in shape")

    @property
    def matrices(self):
        return [self.a00, self.a10, self.a01, self.a20, self.a11, self.a02]

    @property
    def n(self) -> int:
        return self.a00.shape[1]

    def pencil(self) -> RectPencil:
        return RectPencil(dict(zip(QUAD_EXPONENTS, self.matrices)), 2)

    def has_full_normal_rank(self, rng=None, tol: float = 1e-10) -> bool:
        rng = np.random.default_rng(rng)
        p = self.pencil()
        for _ in range(3):
            lam = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            s = robust_svd(p.evaluate(lam), compute_uv=False)
            if s[-1] > tol * s[0]:
                return True
        return False


def quadratic_linearization(q: QuadR2EP):
    """``(3n+1) x 3n`` linear pencil ``A + l B1 + m B2`` with eigenvector ``[x; l x; m x]``."""
    n = q.n
    dtype = np.result_type(*q.matrices)
    Z = np.zeros((n, n), dtype=dtype)
    I = np.eye(n, dtype=dtype)
    Zr = np.zeros((n + 1, n), dtype=dtype)
    A = np.block([[q.a00, q.a10, q.a01], [Z, -I, Z], [Z, Z, -I]])
    B1 = np.block([[Zr, q.a20, q.a11], [I, Z, Z], [Z, Z, Z]])
    B2 = np.block([[Zr, Zr, q.a02], [Z, Z, Z], [I, Z, Z]])
    return A, B1, B2


def _measure(pencil, eigs: EigSet, cfg, refine: bool) -> EigSet:
    return newton_refine(pencil, eigs, cfg) if refine else attach_residuals(pencil, eigs, cfg)


def _filter(pencil, cand: EigSet, cfg, refine: bool = True) -> EigSet:
    cand = _measure(pencil, cand, cfg, refine)
    keep = cand.residuals < cfg.rank_tol
    out = cand.subset(keep)
    out.extra["rejected"] = cand.subset(~keep)
    out.extra["candidates"] = len(cand)
    return out


def q2ep_project(q: QuadR2EP, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, refine: bool = True) -> EigSet:
    """Random projections to a square quadratic 2EP, linearised to ``3n x 3n``.

    The singular joint GEPs of size ``9 n^2`` go through the staircase; the
    ``4 n^2`` candidates are polished (``refine``) and filtered by the rank
    test on ``q``.
    """
    n = q.n
    rng = np.random.default_rng(seed)
    I = np.eye(n)
    Z = np.zeros((n, n))
    last = None
    for _ in range(3):
        eqs = []
        for _ in range(2):
            P = orthonormal_rows(n, n + 1, rng)
            pa = [P @ m for m in q.matrices]
            V0 = np.block([[pa[0], pa[1], pa[2]], [Z, -I, Z], [Z, Z, -I]])
            V1 = np.block([[Z, pa[3], pa[4]], [I, Z, Z], [Z, Z, Z]])
            V2 = np.block([[Z, Z, pa[5]], [Z, Z, Z], [I, Z, Z]])
            eqs.append([V0, V1, V2])
        deltas = delta_family(MepSystem(eqs))
        try:
            cand = staircase_regular_part(deltas[0], deltas[1:], cfg, rng)
            break
        except (StaircaseError, SingularProblemError, np.linalg.LinAlgError) as exc:  # degenerate projection
            last = exc
            log.debug("projection retry after %s", exc)
    else:
        raise SingularProblemError(f"projected problem stayed degenerate: {last}")
    out = _filter(q.pencil(), cand, cfg, refine)
    out.extra["Delta_size"] = deltas[0].shape[0]
    return out


def q2ep_rect_linearize(q: QuadR2EP, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None,
                        refine: bool = True) -> EigSet:
    """Linearise to a ``(3n+1) x 3n`` linear R2EP and compress it."""
    n = q.n
    A, B1, B2 = quadratic_linearization(q)
    ds = compressed_deltas([[A, B1, B2]] * 2, symmetric_compression(3 * n, 2), mem_cap)
    eigs = staircase_regular_part(ds[0], ds[1:], cfg, seed)
    eigs.extra["D_size"] = ds[0].shape[0]
    out = _measure(q.pencil(), eigs, cfg, refine)
    out.extra["linearization"] = RectPencil.linear(A, [B1, B2])
    return out


def q2ep_vandermonde(q: QuadR2EP, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None,
                     refine: bool = True) -> EigSet:
    """Vandermonde compression of the linearisation to size ``3n(n+1)``."""
    n = q.n
    A, B1, B2 = quadratic_linearization(q)
    vc = vandermonde_compression(n)
    ds = compressed_deltas([[A, B1, B2]] * 2, vc.comp, mem_cap)
    eigs = staircase_regular_part(ds[0], ds[1:], cfg, seed)
    eigs.extra["D_size"] = ds[0].shape[0]
    return _measure(q.pencil(), eigs, cfg, refine)


@dataclass
class AuxiliaryPencil:
    """Square pencil enforcing one monomial identity for an added parameter.

    ``matrices`` holds k+1 square coefficient matrices (constant first);
    ``index`` is the position of the added parameter in the extended tuple
    and ``monomial(lam)`` gives the value it must take.
    """

    matrices: list
    index: int
    monomial: Callable
    kernel: Callable | None = None
    name: str = ""

    def __post_init__(self):
        self.matrices = [np.asarray(m, dtype=float) for m in self.matrices]

    def evaluate(self, lam) -> np.ndarray:
        return self.matrices[0] + sum(l * m for l, m in zip(lam, self.matrices[1:]))

    def consistent(self, lam, tol: float = 1e-6) -> bool:
        xi = lam[self.index]
        return abs(xi - self.monomial(lam)) < tol * (1.0 + abs(xi))


def _smallest_right_vector(M):
    _, s, vh = robust_svd(M)
    return vh[M.shape[1] - 1].conj()


def refine_mixed(squares, rect, lam0, steps: int = 10, max_move: float = 1e-4):
    """Newton polish of one extended tuple of a mixed system.

    Unknowns are the kernel vectors of every pencil and the parameters; each
    vector is normalised by ``c^H v = 1``, which makes the system square.
    Steps leaving ``max_move * (1 + |lam0|)`` or not reducing the residual
    are rejected.
    """
    pencils = [list(sq) for sq in squares] + [list(rect)]
    k = len(lam0)
    lam = np.array(lam0, dtype=complex)

    def evaluate(p, l):
        return p[0] + sum(li * m for li, m in zip(l, p[1:]))

    vecs = [_smallest_right_vector(evaluate(p, lam)) for p in pencils]
    cs = [v.copy() for v in vecs]
    dims = [p[0].shape for p in pencils]
    nrow = sum(m + 1 for m, _ in dims)
    ncol = sum(n for _, n in dims) + k

    def residual(l, vs):
        parts = []
        for p, v, c in zip(pencils, vs, cs):
            W = evaluate(p, l)
            parts.append(W @ v / max(np.linalg.norm(W, 2), 1e-300))
            parts.append([c.conj() @ v - 1.0])
        return np.concatenate(parts)

    F = residual(lam, vecs)
    fnorm = np.linalg.norm(F)
    limit = max_move * (1.0 + np.linalg.norm(lam0))
    for _ in range(steps):
        if fnorm < 1e-15:
            break
        J = np.zeros((nrow, ncol), dtype=complex)
        rhs = np.zeros(nrow, dtype=complex)
        r0 = c0 = 0
        for p, v, c, (m, n) in zip(pencils, vecs, cs, dims):
            W = evaluate(p, lam)
            J[r0:r0 + m, c0:c0 + n] = W
            for i in range(k):
                J[r0:r0 + m, ncol - k + i] = p[i + 1] @ v
            J[r0 + m, c0:c0 + n] = c.conj()
            rhs[r0:r0 + m] = -(W @ v)
            rhs[r0 + m] = 1.0 - c.conj() @ v
            r0 += m + 1
            c0 += n
        delta = np.linalg.lstsq(J, rhs, rcond=None)[0]
        new_lam = lam + delta[ncol - k:]
        if np.linalg.norm(new_lam - lam0) > limit:
            break
        new_vecs = []
        c0 = 0
        for v, (_, n) in zip(vecs, dims):
            new_vecs.append(v + delta[c0:c0 + n])
            c0 += n
        F = residual(new_lam, new_vecs)
        if not np.linalg.norm(F) < fnorm:
            break
        lam, vecs, fnorm = new_lam, new_vecs, np.linalg.norm(F)
    return lam


def mixed_solve(
    squares,
    rect,
    cfg: ToleranceConfig = DEFAULT_TOL,
    seed=None,
    consistency_tol: float = 1e-6,
    mem_cap=None,
    refine: bool = True,
) -> EigSet:
    """Solve s auxiliary square pencils together with one rectangular pencil.

    ``rect`` lists k+1 matrices of size ``(n+r-1) x n`` with ``r = k - s``.
    The compressed matrices are ``(I_q (x) L) Delta~_i (I_q (x) T)`` with
    square factors first.  With ``refine`` every tuple gets a guarded Newton
    polish on the extended system; tuples left inconsistent get a second
    polish with the wider ``RESCUE_MOVE`` bound.  Tuples whose auxiliary
    parameters still disagree with their monomials are dropped (counted in
    ``extra["inconsistent"]``); the returned values omit the auxiliary
    components, the full tuples stay in ``extra["extended"]``.
    """
    system = MixedSystem([sq.matrices for sq in squares], rect)
    n = system.rect[0].shape[1]
    q = math.prod(m[0].shape[0] for m in system.squares)
    comp = symmetric_compression(n, system.r).with_prefix(q)
    ds = compressed_deltas(system.rows(), comp, mem_cap)
    eigs = staircase_regular_part(ds[0], ds[1:], cfg, seed)
    vals = eigs.values
    if refine:
        vals = np.array([refine_mixed(system.squares, system.rect, lam) for lam in vals]).reshape(vals.shape)
    aux_idx = {sq.index for sq in squares}

    def consistent(lam):
        return all(sq.consistent(lam, consistency_tol) for sq in squares)

    keep = np.array([consistent(lam) for lam in vals], dtype=bool)
    if refine:
        for j in np.flatnonzero(~keep):
            lam = refine_mixed(system.squares, system.rect, vals[j], max_move=RESCUE_MOVE)
            if consistent(lam):
                vals[j], keep[j] = lam, True
    dropped = int(np.count_nonzero(~keep))
    if dropped:
        log.warning("discarded %d eigenvalues with inconsistent auxiliary parameters", dropped)
    primary = [j for j in range(system.k) if j not in aux_idx]
    ext = vals[keep]
    out = EigSet(ext[:, primary])
    out.extra.update(
        extended=ext,
        inconsistent=dropped,
        D_size=ds[0].shape[0],
        regular_size=eigs.extra.get("regular_size"),
    )
    return out
