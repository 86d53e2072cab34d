"""Dense kernels: Kronecker products, operator determinants, rank tests and
joint eigensolvers for commuting (and singular) families of pencils."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "ToleranceConfig",
    "EigSet",
    "MepSystem",
    "MixedSystem",
    "StaircaseError",
    "SingularProblemError",
    "kron",
    "op_det",
    "delta_family",
    "mixed_delta_family",
    "rank_drop_test",
    "joint_commuting_eigs",
    "regular_part",
    "staircase_regular_part",
    "numerical_rank",
    "robust_svd",
    "permutation_sign",
    "multiset_distance",
    "is_real_value",
    "DEFAULT_TOL",
]

log = logging.getLogger(__name__)


class StaircaseError(RuntimeError):
    """Rank decisions in the staircase reduction did not produce a consistent structure."""


class SingularProblemError(RuntimeError):
    """The instance is not generic enough for the requested solver."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Thresholds used by the rank test, the staircase and eigenvalue clustering.

    All values are relative and must lie in (0, 1).
    """

    rank_tol: float = 1e-10
    stair_tol: float = 1e-10
    cluster_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_tol", "stair_tol", "cluster_tol"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")


DEFAULT_TOL = ToleranceConfig()


def is_real_value(z, rel=1e-8):
    z = np.asarray(z)
    return np.abs(z.imag) < rel * (1.0 + np.abs(z.real))


@dataclass
class EigSet:
    """Eigenvalue k-tuples with per-tuple residuals and optional vectors.

    ``values`` has shape ``(m, k)``; ``residuals[j]`` is ``nan`` when no
    pencil was available to measure it.
    """

    values: np.ndarray
    residuals: np.ndarray | None = None
    vectors: list | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        self.values = vals
        if self.residuals is None:
            self.residuals = np.full(len(vals), np.nan)
        else:
            self.residuals = np.asarray(self.residuals, dtype=float)
        if len(self.residuals) != len(vals):
            raise ValueError("residuals and values differ in length")
        if self.vectors is not None and len(self.vectors) != len(vals):
            raise ValueError("vectors and values differ in length")

    def __len__(self) -> int:
        return self.values.shape[0]

    def __iter__(self) -> Iterator[tuple]:
        for j in range(len(self)):
            vec = None if self.vectors is None else self.vectors[j]
            yield self.values[j], float(self.residuals[j]), vec

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def real_mask(self, rel: float = 1e-8) -> np.ndarray:
        """True for tuples whose every component is numerically real."""
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        return np.all(is_real_value(self.values, rel), axis=1)

    def subset(self, mask) -> "EigSet":
        idx = np.flatnonzero(np.asarray(mask)) if np.asarray(mask).dtype == bool else np.asarray(mask)
        vecs = None if self.vectors is None else [self.vectors[j] for j in idx]
        return EigSet(self.values[idx], self.residuals[idx], vecs, dict(self.extra))

    def sorted(self) -> "EigSet":
        """Lexicographic order on (Re l1, Im l1, Re l2, ...)."""
        if len(self) == 0:
            return self
        keys = []
        for col in range(self.k - 1, -1, -1):
            keys.append(self.values[:, col].imag)
            keys.append(self.values[:, col].real)
        order = np.lexsort(keys)
        return self.subset(order)


@dataclass
class MepSystem:
    """k square pencils ``V_i0 + l_1 V_i1 + ... + l_k V_ik``."""

    equations: list

    def __post_init__(self):
        k = len(self.equations)
        eqs = []
        for i, eq in enumerate(self.equations):
            if len(eq) != k + 1:
                raise ValueError(f"equation {i} needs {k + 1} matrices, got {len(eq)}")
            mats = [np.asarray(m) for m in eq]
            shape = mats[0].shape
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ValueError(f"equation {i} matrices must be square")
            if any(m.shape != shape for m in mats):
                raise ValueError(f"equation {i} matrices differ in shape")
            eqs.append(mats)
        self.equations = eqs

    @property
    def k(self) -> int:
        return len(self.equations)

    def evaluate(self, i: int, lam) -> np.ndarray:
        eq = self.equations[i]
        return eq[0] + sum(l * m for l, m in zip(lam, eq[1:]))


@dataclass
class MixedSystem:
    """Square auxiliary pencils plus one rectangular pencil used ``k - s`` times.

    ``squares[j]`` and ``rect`` are lists of k+1 coefficient matrices
    (constant term first).  The rectangular matrices are ``(n+r-1) x n``
    where ``r = k - s`` is the number of copies.
    """

    squares: list
    rect: list

    def __post_init__(self):
        self.rect = [np.asarray(m) for m in self.rect]
        k = len(self.rect) - 1
        if k < 1:
            raise ValueError("rectangular pencil needs at least one parameter")
        sq = []
        for j, eq in enumerate(self.squares):
            mats = [np.asarray(m) for m in eq]
            if len(mats) != k + 1:
                raise ValueError(f"square pencil {j} needs {k + 1} matrices")
            d = mats[0].shape[0]
            if any(m.shape != (d, d) for m in mats):
                raise ValueError(f"square pencil {j} must have equal square matrices")
            sq.append(mats)
        self.squares = sq
        shape = self.rect[0].shape
        if any(m.shape != shape for m in self.rect):
            raise ValueError("rectangular coefficient matrices differ in shape")
        if self.r < 1:
            raise ValueError(f"s + r must equal k: {len(self.squares)} squares leave no rectangular rows")
        if shape[0] != shape[1] + self.r - 1:
            raise ValueError(
                f"rectangular matrices must be (n+{self.r - 1}) x n for {self.r} copies, got {shape}"
            )

    @property
    def k(self) -> int:
        return len(self.rect) - 1

    @property
    def s(self) -> int:
        return len(self.squares)

    @property
    def r(self) -> int:
        return self.k - self.s

    def rows(self) -> list:
        return self.squares + [self.rect] * self.r


def kron(a, b) -> np.ndarray:
    return np.kron(np.asarray(a), np.asarray(b))


def permutation_sign(perm: Sequence[int]) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _kron_chain(factors):
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def _check_grid(grid):
    k = len(grid)
    if k == 0:
        raise ValueError("empty grid")
    out = []
    for i, row in enumerate(grid):
        if len(row) != k:
            raise ValueError(f"grid row {i} has {len(row)} entries, expected {k}")
        mats = [np.asarray(m) for m in row]
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise ValueError(f"dimension mismatch in grid row {i}")
        out.append(mats)
    return out


def op_det(grid) -> np.ndarray:
    """Operator determinant of a k x k grid of matrices.

    Sum over all permutations ``sigma`` of ``sgn(sigma) G[0][sigma_0] (x) ... (x) G[k-1][sigma_{k-1}]``.
    Terms with an all-zero factor are skipped.
    """
    grid = _check_grid(grid)
    k = len(grid)
    rows = math.prod(row[0].shape[0] for row in grid)
    cols = math.prod(row[0].shape[1] for row in grid)
    dtype = np.result_type(*[m for row in grid for m in row])
    out = np.zeros((rows, cols), dtype=dtype)
    nonzero = [[bool(np.any(m)) for m in row] for row in grid]
    for perm in itertools.permutations(range(k)):
        if not all(nonzero[i][perm[i]] for i in range(k)):
            continue
        term = _kron_chain([grid[i][perm[i]] for i in range(k)])
        if permutation_sign(perm) > 0:
            out += term
        else:
            out -= term
    return out


def replace_column(rows, i):
    """Parameter grid of equation rows with column ``i`` (1-based) taken from the constant term."""
    k = len(rows)
    return [[row[0] if j == i else row[j] for j in range(1, k + 1)] for row in rows]


def deltas_from_rows(rows) -> list:
    """``[Delta_0, ..., Delta_k]`` for equation rows ``[V_i0, V_i1, ..., V_ik]``."""
    k = len(rows)
    param = [list(row[1:]) for row in rows]
    out = [op_det(param)]
    for i in range(1, k + 1):
        out.append(-op_det(replace_column(rows, i)))
    return out


def delta_family(system: MepSystem) -> list:
    """Operator determinants ``Delta_0, ..., Delta_k`` of a square MEP."""
    return deltas_from_rows(system.equations)


def mixed_delta_family(system: MixedSystem) -> list:
    """Rectangular operator determinants of a mixed square/rectangular system."""
    return deltas_from_rows(system.rows())


def robust_svd(a, full_matrices: bool = True, compute_uv: bool = True):
    """SVD by LAPACK ``gesdd`` with a ``gesvd`` fallback when it does not converge."""
    try:
        return sla.svd(a, full_matrices=full_matrices, compute_uv=compute_uv, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        log.debug("gesdd did not converge, retrying with gesvd")
        return sla.svd(a, full_matrices=full_matrices, compute_uv=compute_uv, lapack_driver="gesvd")


def numerical_rank(s: np.ndarray, tol: float, scale: float | None = None) -> int:
    """Count singular values above ``tol * scale`` (``scale`` defaults to ``s[0]``)."""
    if s.size == 0:
        return 0
    ref = s[0] if scale is None else scale
    if ref == 0:
        return 0
    return int(np.count_nonzero(s > tol * ref))


def multiset_distance(a, b) -> float:
    """Largest relative distance after greedy nearest-neighbour pairing.

    Rows of ``a`` and ``b`` are tuples in C^k; the distance of a pair is
    ``||a_i - b_j|| / (1 + ||a_i||)``.  The globally closest remaining pair
    is matched first.  Returns ``inf`` when the sizes differ.
    """
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    b = np.atleast_2d(np.asarray(b, dtype=complex))
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.shape != b.shape:
        return float("inf")
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2) / (1.0 + np.linalg.norm(a, axis=1))[:, None]
    worst = 0.0
    for _ in range(len(a)):
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        worst = max(worst, float(dist[i, j]))
        dist[i, :] = np.inf
        dist[:, j] = np.inf
    return worst


def rank_drop_test(pencil, lam, cfg: ToleranceConfig = DEFAULT_TOL):
    """Check ``sigma_n(M(lam)) < rank_tol * scale``.

    ``scale`` is ``sum_w |lam^w| ||A_w||_2`` when ``pencil`` exposes its
    ``terms`` and ``||M(lam)||_2`` otherwise, so ``residual = sigma_n / scale``
    is a backward error.  The coefficient scale keeps the test meaningful for
    ``n = 1`` and when ``M(lam)`` cancels to roundoff.  Returns
    ``(passes, residual, x)`` with ``x`` the right singular vector of the
    smallest singular value.
    """
    lam = np.asarray(lam, dtype=complex)
    if not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalue tuple is not finite")
    M = pencil.evaluate(lam)
    _, s, vh = robust_svd(M)
    n = M.shape[1]
    x = vh[n - 1].conj()
    terms = getattr(pencil, "terms", None)
    if terms:
        scale = sum(abs(np.prod(lam ** np.asarray(w))) * np.linalg.norm(m, 2) for w, m in terms.items())
    else:
        scale = s[0]
    if scale == 0:
        return True, 0.0, x
    residual = float(s[n - 1] / scale)
    return residual < cfg.rank_tol, residual, x


# Schur eigenvalues are also merged when their first-order perturbation discs,
# of radius DISC_FACTOR * eps * ||T||_F * kappa, overlap and they lie within
# sqrt(cluster_tol) * (1 + |z|) of each other.
DISC_FACTOR = 100.0


def _schur_condition(T: np.ndarray) -> np.ndarray:
    """Eigenvalue condition numbers of an upper triangular matrix.

    Right eigenvectors (columns of X) and left eigenvectors (rows of Y) are
    normalised to a unit entry on the diagonal, so ``y_j^H x_j = 1`` and the
    condition number is ``||x_j|| ||y_j||``.  Tiny pivots are lifted to
    ``eps * ||T||_F`` as in LAPACK's trevc.
    """
    N = T.shape[0]
    t = np.diag(T)
    eps = np.finfo(float).eps
    smin = eps * max(np.linalg.norm(T), np.finfo(float).tiny)
    X = np.eye(N, dtype=complex)
    Y = np.eye(N, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for i in range(N - 2, -1, -1):
            d = t[i] - t[i + 1:]
            d[np.abs(d) < smin] = smin
            X[i, i + 1:] = -(T[i, i + 1:] @ X[i + 1:, i + 1:]) / d
        for l in range(1, N):
            d = t[:l] - t[l]
            d[np.abs(d) < smin] = smin
            Y[:l, l] = (Y[:l, :l] @ T[:l, l]) / d
        kappa = np.linalg.norm(X, axis=0) * np.linalg.norm(Y, axis=1)
    kappa[~np.isfinite(kappa)] = 1.0 / eps
    return np.minimum(kappa, 1.0 / eps)


def _cluster_labels(z: np.ndarray, tol: float, radius: np.ndarray | None = None) -> np.ndarray:
    """Single-linkage clusters of ``z`` at distance ``tol * (1 + |z|)``.

    With ``radius`` two values within ``sqrt(tol) * (1 + |z|)`` are also
    linked when their discs overlap.
    """
    m = len(z)
    if m == 0:
        return np.zeros(0, dtype=int)
    dist = np.abs(z[:, None] - z[None, :])
    scale = 1.0 + np.maximum(np.abs(z)[:, None], np.abs(z)[None, :])
    adj = dist <= tol * scale
    if radius is not None:
        adj |= (dist <= radius[:, None] + radius[None, :]) & (dist <= math.sqrt(tol) * scale)
    _, labels = connected_components(csr_matrix(adj), directed=False)
    return labels


def _needs_condition(z: np.ndarray, tol: float) -> bool:
    if len(z) < 2:
        return False
    dist = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(dist, np.inf)
    scale = 1.0 + np.maximum(np.abs(z)[:, None], np.abs(z)[None, :])
    return bool(np.any(dist <= math.sqrt(tol) * scale))


def _group_clusters(T, Q, labels):
    """Reorder a complex Schur form so that every cluster is contiguous."""
    order = list(labels)
    ztrexc = sla.lapack.ztrexc
    done = set()
    pos = 0
    while pos < len(order):
        lab = order[pos]
        if lab in done:
            pos += 1
            continue
        done.add(lab)
        target = pos
        for j in range(pos + 1, len(order)):
            if order[j] == lab:
                if j != target + 1:
                    T, Q, info = ztrexc(T, Q, j + 1, target + 2, wantq=1, overwrite_a=1, overwrite_q=1)
                    if info != 0:
                        raise np.linalg.LinAlgError(f"ztrexc failed with info={info}")
                    order.insert(target + 1, order.pop(j))
                target += 1
        pos = target + 1
    return T, Q, np.asarray(order)


def joint_commuting_eigs(d0, ds, cfg: ToleranceConfig = DEFAULT_TOL, rng=None) -> EigSet:
    """Joint eigenvalues of the commuting family ``d0^{-1} ds[i]``.

    A random unit-modulus combination of the family is brought to complex
    Schur form; clustered Schur eigenvalues are made contiguous and each
    component is read as the mean of the diagonal block of the transformed
    ``d0^{-1} ds[i]``.  Tuples are repeated by multiplicity.
    """
    rng = np.random.default_rng(rng)
    d0 = np.asarray(d0)
    N = d0.shape[0]
    k = len(ds)
    if N == 0:
        return EigSet(np.zeros((0, k), dtype=complex))
    s = robust_svd(d0, compute_uv=False)
    if s[-1] <= cfg.stair_tol * s[0]:
        raise SingularProblemError("d0 is numerically singular; use staircase_regular_part")
    lu = sla.lu_factor(d0)
    X = [sla.lu_solve(lu, np.asarray(d)) for d in ds]
    result = None
    for attempt in range(2):
        coef = np.exp(2j * np.pi * rng.random(k))
        M = sum(c * x for c, x in zip(coef, X))
        T, Q = sla.schur(M, output="complex")
        z = np.diag(T)
        radius = None
        if _needs_condition(z, cfg.cluster_tol):
            radius = DISC_FACTOR * np.finfo(float).eps * np.linalg.norm(T) * _schur_condition(T)
        labels = _cluster_labels(z, cfg.cluster_tol, radius)
        if len(np.unique(labels)) < N:
            T, Q, labels = _group_clusters(T, Q, labels)
        diags = [np.einsum("ij,ij->j", Q.conj(), x @ Q) for x in X]
        tdiag = np.diag(T)
        values = np.empty((N, k), dtype=complex)
        ambiguous = False
        start = 0
        while start < N:
            stop = start + 1
            while stop < N and labels[stop] == labels[start]:
                stop += 1
            if stop - start > 1:
                tb = tdiag[start:stop]
                tspread = np.max(np.abs(tb - tb.mean()))
            for i in range(k):
                block = diags[i][start:stop]
                mean = block.mean()
                values[start:stop, i] = mean
                if stop - start > 1:
                    # distinct tuples that collide under the combination spread
                    # far more in a component than in the combination itself
                    spread = np.max(np.abs(block - mean))
                    if spread > math.sqrt(cfg.cluster_tol) * (1.0 + abs(mean)) + 100.0 * tspread:
                        ambiguous = True
            start = stop
        result = values
        if not ambiguous:
            break
        log.debug("ambiguous clustering in joint eigensolve, retrying with a fresh combination")
    return EigSet(result)


def regular_part(d0, ds, tol: float = 1e-10, max_iter: int | None = None):
    """Deflate the common singular structure of the family ``(d0, ds[i])``.

    Right phase: column-compress ``d0`` and row-compress the images of its
    kernel under all ``ds[i]``; repeat until ``d0`` has full column rank.
    Left phase: the same on the conjugate transposes until ``d0`` is square.
    Returns the deflated ``[d0, *ds]`` with a square nonsingular ``d0``.
    """
    mats = [np.asarray(d0)] + [np.asarray(d) for d in ds]
    N = mats[0].shape[0]
    if any(m.shape != (N, N) for m in mats):
        raise ValueError("all matrices of the family must be square and equal in size")
    if max_iter is None:
        max_iter = 2 * N + 2
    steps = 0
    # images of kernels are judged against the family, not against themselves
    scale = max(np.linalg.norm(m, 2) for m in mats) if N else 0.0

    # right phase
    while True:
        m, n = mats[0].shape
        if n == 0:
            return mats
        _, s, vh = robust_svd(mats[0])
        r = numerical_rank(s, tol)
        if r == n:
            break
        steps += 1
        if steps > max_iter:
            raise StaircaseError("staircase did not converge")
        V1 = vh[:r].conj().T
        V2 = vh[r:].conj().T
        W = np.hstack([a @ V2 for a in mats[1:]])
        uw, sw, _ = robust_svd(W)
        sr = numerical_rank(sw, tol, scale)
        W2 = uw[:, sr:]
        mats = [W2.conj().T @ a @ V1 for a in mats]
        log.debug("staircase right step %d: size %s", steps, mats[0].shape)
    # left phase
    while True:
        m, n = mats[0].shape
        if m == n:
            break
        steps += 1
        if steps > max_iter:
            raise StaircaseError("staircase did not converge")
        u, s, _ = robust_svd(mats[0])
        r = numerical_rank(s, tol)
        if r != n:
            raise StaircaseError(
                f"inconsistent rank decisions: d0 ({m}x{n}) lost full column rank in the left phase"
            )
        U1 = u[:, :r]
        U2 = u[:, r:]
        W = np.hstack([a.conj().T @ U2 for a in mats[1:]])
        uw, sw, _ = robust_svd(W)
        sr = numerical_rank(sw, tol, scale)
        Z2 = uw[:, sr:]
        mats = [U1.conj().T @ a @ Z2 for a in mats]
        log.debug("staircase left step %d: size %s", steps, mats[0].shape)
    return mats


def _rank_completing_eigs(d0, ds, accept, cfg, rng, eps):
    mats = [np.asarray(d0)] + [np.asarray(d) for d in ds]
    N = mats[0].shape[0]
    comb = sum(c * m for c, m in zip(rng.standard_normal(len(mats)), mats))
    nrank = numerical_rank(robust_svd(comb, compute_uv=False), cfg.stair_tol)
    defect = N - nrank
    if defect > 0:
        U = np.linalg.qr(rng.standard_normal((N, defect)))[0]
        V = np.linalg.qr(rng.standard_normal((N, defect)))[0]
        scale = max(np.linalg.norm(m, 2) for m in mats)
        mats = [
            m + eps * scale * (U * rng.standard_normal(defect)) @ V.T for m in mats
        ]
    cand = joint_commuting_eigs(mats[0], mats[1:], cfg, rng)
    keep = np.array([bool(accept(lam)) for lam in cand.values], dtype=bool)
    return cand.subset(keep)


def staircase_regular_part(
    d0,
    ds,
    cfg: ToleranceConfig = DEFAULT_TOL,
    rng=None,
    perturb: bool = False,
    accept: Callable | None = None,
    perturb_eps: float = 1e-8,
) -> EigSet:
    """Finite eigenvalues of the common regular part of ``ds[i] z = l_i d0 z``.

    With ``perturb=True`` the family is instead made regular by a random
    rank-completing perturbation of size ``perturb_eps`` and the joint
    eigenvalues are filtered with ``accept(lam) -> bool``.
    """
    rng = np.random.default_rng(rng)
    if perturb:
        if accept is None:
            raise ValueError("the perturbation path needs an accept(lam) filter")
        return _rank_completing_eigs(d0, ds, accept, cfg, rng, perturb_eps)
    mats = regular_part(d0, ds, cfg.stair_tol)
    out = joint_commuting_eigs(mats[0], mats[1:], cfg, rng)
    out.extra["regular_size"] = mats[0].shape[0]
    return out
