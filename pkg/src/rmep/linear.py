"""Linear rectangular multiparameter eigenvalue problems
``(A + l_1 B_1 + ... + l_k B_k) x = 0`` with ``(n+k-1) x n`` matrices."""

from __future__ import annotations

import math

import numpy as np

from .compress import compressed_deltas, symmetric_compression
from .linalg import (
    DEFAULT_TOL,
    EigSet,
    MepSystem,
    SingularProblemError,
    ToleranceConfig,
    delta_family,
    joint_commuting_eigs,
    rank_drop_test,
    staircase_regular_part,
)

__all__ = [
    "RectPencil",
    "count_linear",
    "solve_alg1",
    "solve_alg2",
    "orthonormal_rows",
    "attach_residuals",
    "newton_refine",
]


class RectPencil:
    """Multivariate matrix polynomial ``M(l) = sum_w l^w A_w``.

    ``terms`` maps exponent tuples ``w`` (length k) to equally sized matrices;
    the constant term must be present.
    """

    def __init__(self, terms: dict, k: int | None = None):
        if not terms:
            raise ValueError("a pencil needs at least a constant term")
        terms = {tuple(int(e) for e in w): np.asarray(m) for w, m in terms.items()}
        ks = {len(w) for w in terms}
        if len(ks) != 1:
            raise ValueError("exponent tuples differ in length")
        self.k = ks.pop() if k is None else k
        if any(len(w) != self.k for w in terms):
            raise ValueError(f"exponent tuples must have length {self.k}")
        zero = (0,) * self.k
        if zero not in terms:
            raise ValueError("constant term is missing")
        shape = terms[zero].shape
        if len(shape) != 2 or any(m.shape != shape for m in terms.values()):
            raise ValueError("all coefficient matrices must share one 2-D shape")
        if any(min(w) < 0 for w in terms):
            raise ValueError("negative exponent")
        self.terms = terms
        self.shape = shape

    @classmethod
    def linear(cls, a, bs) -> "RectPencil":
        k = len(bs)
        terms = {(0,) * k: np.asarray(a)}
        for i, b in enumerate(bs):
            w = [0] * k
            w[i] = 1
            terms[tuple(w)] = np.asarray(b)
        return cls(terms, k)

    @property
    def n(self) -> int:
        return self.shape[1]

    @property
    def degree(self) -> int:
        return max(sum(w) for w in self.terms)

    def coefficient(self, w) -> np.ndarray:
        w = tuple(w)
        if w in self.terms:
            return self.terms[w]
        return np.zeros(self.shape, dtype=self.dtype)

    @property
    def dtype(self):
        return np.result_type(*self.terms.values())

    def linear_parts(self):
        """``(A, [B_1, ..., B_k])`` of a degree-1 pencil."""
        if self.degree > 1:
            raise ValueError("pencil is not linear")
        eye = np.eye(self.k, dtype=int)
        return self.coefficient((0,) * self.k), [self.coefficient(e) for e in eye]

    def evaluate(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex)
        if lam.shape != (self.k,):
            raise ValueError(f"expected {self.k} parameters")
        out = np.zeros(self.shape, dtype=complex)
        for w, m in self.terms.items():
            out += np.prod(lam ** np.asarray(w)) * m
        return out

    def derivative(self, i: int, lam) -> np.ndarray:
        """Partial derivative of ``M`` with respect to ``l_i`` at ``lam``."""
        lam = np.asarray(lam, dtype=complex)
        out = np.zeros(self.shape, dtype=complex)
        for w, m in self.terms.items():
            if w[i] == 0:
                continue
            e = np.asarray(w)
            e[i] -= 1
            out += w[i] * np.prod(lam ** e) * m
        return out


def count_linear(n: int, k: int) -> int:
    """Generic number of eigenvalues of a linear RMEP."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    return math.comb(n + k - 1, k)


def orthonormal_rows(rows: int, cols: int, rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((cols, rows)))
    return q.T


def _selection_projections(n, k):
    return [np.eye(n + k - 1)[j:j + n] for j in range(k)]


def attach_residuals(pencil, eigs: EigSet, cfg: ToleranceConfig = DEFAULT_TOL) -> EigSet:
    """Fill residuals and vectors of ``eigs`` from the rank test on ``pencil``."""
    res = np.empty(len(eigs))
    vecs = []
    for j, lam in enumerate(eigs.values):
        _, res[j], x = rank_drop_test(pencil, lam, cfg)
        vecs.append(x)
    return EigSet(eigs.values, res, vecs, dict(eigs.extra))


def newton_refine(pencil: RectPencil, eigs: EigSet, cfg: ToleranceConfig = DEFAULT_TOL, steps: int = 4,
                  max_move: float = 1e-6) -> EigSet:
    """Polish eigenvalues with Newton steps on ``M(l) x = 0, c^H x = 1``.

    The bordered system is square, ``(n+k) x (n+k)``.  A step is kept only
    while it stays within ``max_move * (1 + |l|)`` of the starting value and
    lowers the relative residual, so a tuple never jumps to another
    eigenvalue.  Residuals and vectors are recomputed.
    """
    k = pencil.k
    vals = np.array(eigs.values, dtype=complex)
    for j, lam0 in enumerate(vals):
        lam = lam0.copy()
        _, res, x = rank_drop_test(pencil, lam, cfg)
        c = x.copy()
        for _ in range(steps):
            if res < np.finfo(float).eps * 10:
                break
            M = pencil.evaluate(lam)
            J = np.zeros((M.shape[0] + 1, M.shape[1] + k), dtype=complex)
            J[:-1, :M.shape[1]] = M
            for i in range(k):
                J[:-1, M.shape[1] + i] = pencil.derivative(i, lam) @ x
            J[-1, :M.shape[1]] = c.conj()
            F = np.concatenate([M @ x, [c.conj() @ x - 1.0]])
            delta = np.linalg.lstsq(J, -F, rcond=None)[0]
            new_lam = lam + delta[M.shape[1]:]
            if np.linalg.norm(new_lam - lam0) > max_move * (1.0 + np.linalg.norm(lam0)):
                break
            _, new_res, new_x = rank_drop_test(pencil, new_lam, cfg)
            if not new_res < res:
                break
            lam, res = new_lam, new_res
            x = x + delta[:M.shape[1]]
        vals[j] = lam
    return attach_residuals(pencil, EigSet(vals, extra=dict(eigs.extra)), cfg)


def _check_linear(pencil: RectPencil):
    if pencil.degree != 1:
        raise ValueError("solver needs a degree-1 pencil")
    n, k = pencil.n, pencil.k
    if pencil.shape != (n + k - 1, n):
        raise ValueError(f"a {k}-parameter pencil needs ({n + k - 1}, {n}) matrices, got {pencil.shape}")


def solve_alg1(pencil: RectPencil, projections=None, cfg: ToleranceConfig = DEFAULT_TOL, seed=None,
               refine: bool = True) -> EigSet:
    """Projection method: square MEP from k projections, then a rank filter.

    ``projections`` is ``None`` (random, orthonormal rows), ``"select"``
    (consecutive row selections) or an explicit list of k matrices.  With
    ``refine`` every candidate gets a guarded Newton polish before the rank
    test; spurious candidates cannot move far enough to pass it.  The
    rejected candidates are kept in ``extra["rejected"]``.
    """
    _check_linear(pencil)
    n, k = pencil.n, pencil.k
    a, bs = pencil.linear_parts()
    rng = np.random.default_rng(seed)
    fixed = projections is not None
    for attempt in range(3):
        if projections is None:
            ps = [orthonormal_rows(n, n + k - 1, rng) for _ in range(k)]
        elif isinstance(projections, str):
            if projections != "select":
                raise ValueError(f"unknown projection mode {projections!r}")
            ps = _selection_projections(n, k)
        else:
            ps = [np.asarray(p) for p in projections]
            if len(ps) != k or any(p.shape != (n, n + k - 1) for p in ps):
                raise ValueError(f"need {k} projections of shape ({n}, {n + k - 1})")
        system = MepSystem([[p @ a] + [p @ b for b in bs] for p in ps])
        deltas = delta_family(system)
        try:
            cand = joint_commuting_eigs(deltas[0], deltas[1:], cfg, rng)
            break
        except SingularProblemError:
            if fixed or attempt == 2:
                raise SingularProblemError("projected Delta_0 is singular; instance is not generic") from None
    cand = newton_refine(pencil, cand, cfg) if refine else attach_residuals(pencil, cand, cfg)
    keep = cand.residuals < cfg.rank_tol
    out = cand.subset(keep)
    out.extra["rejected"] = cand.subset(~keep)
    out.extra["candidates"] = len(cand)
    return out


def solve_alg2(pencil: RectPencil, cfg: ToleranceConfig = DEFAULT_TOL, seed=None, mem_cap=None,
               refine: bool = True) -> EigSet:
    """Compression method: joint GEPs with ``D_i = L Delta~_i T`` of optimal size."""
    _check_linear(pencil)
    n, k = pencil.n, pencil.k
    rng = np.random.default_rng(seed)
    eq = [pencil.coefficient((0,) * k)] + list(pencil.linear_parts()[1])
    ds = compressed_deltas([eq] * k, symmetric_compression(n, k), mem_cap)
    try:
        eigs = joint_commuting_eigs(ds[0], ds[1:], cfg, rng)
    except SingularProblemError:
        eigs = staircase_regular_part(ds[0], ds[1:], cfg, rng)
    eigs.extra["D_size"] = ds[0].shape[0]
    return newton_refine(pencil, eigs, cfg) if refine else attach_residuals(pencil, eigs, cfg)
