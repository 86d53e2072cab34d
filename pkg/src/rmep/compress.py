"""Index enumerations and the 0/1 compression matrices T, L (symmetric
tensors / strictly increasing rows) and their quadratic Vandermonde variant."""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp

from .linalg import deltas_from_rows, permutation_sign

__all__ = [
    "IndexMaps",
    "index_maps",
    "build_T",
    "build_L",
    "Compression",
    "symmetric_compression",
    "wide_deltas",
    "compress",
    "compressed_deltas",
    "VandermondeCompression",
    "vandermonde_compression",
    "memory_cap",
]

DEFAULT_MEM_CAP = 2 * 1024**3


def memory_cap() -> int:
    """Byte cap for dense materialisation of rectangular Delta matrices."""
    env = os.environ.get("RMEP_MEM_CAP_BYTES")
    if env:
        return int(env)
    return DEFAULT_MEM_CAP


class IndexMaps(NamedTuple):
    """1-based enumerations used by the compression matrices.

    r: [1,n]^k -> [1, n^k];  c: nondecreasing -> [1, C(n+k-1,k)];
    beta: [1,n+k-1]^k -> [1,(n+k-1)^k];  gamma: strictly increasing -> [1, C(n+k-1,k)].
    """

    r: Callable
    c: Callable
    beta: Callable
    gamma: Callable
    nondecreasing: list
    increasing: list


def _radix(idx, base, k):
    if len(idx) != k:
        raise ValueError(f"multi-index must have {k} components")
    out = 0
    for i in idx:
        if not 1 <= i <= base:
            raise ValueError(f"component {i} out of range [1, {base}]")
        out = out * base + (i - 1)
    return out + 1


def index_maps(n: int, k: int) -> IndexMaps:
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    m = n + k - 1
    nondec = list(itertools.combinations_with_replacement(range(1, n + 1), k))
    incr = list(itertools.combinations(range(1, m + 1), k))
    c_table = {t: j + 1 for j, t in enumerate(nondec)}
    g_table = {t: j + 1 for j, t in enumerate(incr)}

    def lookup(table, name):
        def f(idx):
            try:
                return table[tuple(idx)]
            except KeyError:
                raise ValueError(f"{tuple(idx)} is not in the domain of {name}") from None
        return f

    return IndexMaps(
        r=lambda idx: _radix(idx, n, k),
        c=lookup(c_table, "c"),
        beta=lambda idx: _radix(idx, m, k),
        gamma=lookup(g_table, "gamma"),
        nondecreasing=nondec,
        increasing=incr,
    )


def _sym_col_of_row(n, k):
    """Column of T holding the single 1 of each row (0-based)."""
    nondec = itertools.combinations_with_replacement(range(n), k)
    table = {t: j for j, t in enumerate(nondec)}
    out = np.empty(n**k, dtype=np.int64)
    for p, idx in enumerate(itertools.product(range(n), repeat=k)):
        out[p] = table[tuple(sorted(idx))]
    return out


def _strict_rows(n, k):
    m = n + k - 1
    rows = [
        int(np.ravel_multi_index(t, (m,) * k)) for t in itertools.combinations(range(m), k)
    ]
    return np.asarray(rows, dtype=np.int64)


@dataclass(frozen=True)
class Compression:
    """A 0/1 pair: a row selection (left) and a column summation (right).

    ``col_of_row[p]`` is the column of the right matrix holding the single 1
    in row p; ``rows[j]`` is the column of the left matrix selected by row j.
    """

    col_of_row: np.ndarray
    ncols: int
    rows: np.ndarray
    nrows_full: int

    @property
    def T(self) -> sp.csr_matrix:
        p = len(self.col_of_row)
        return sp.csr_matrix(
            (np.ones(p), (np.arange(p), self.col_of_row)), shape=(p, self.ncols)
        )

    @property
    def L(self) -> sp.csr_matrix:
        q = len(self.rows)
        return sp.csr_matrix((np.ones(q), (np.arange(q), self.rows)), shape=(q, self.nrows_full))

    def with_prefix(self, q_rows: int, q_cols: int | None = None) -> "Compression":
        """Compression ``I_q (x) L`` and ``I_q (x) T``."""
        q_cols = q_rows if q_cols is None else q_cols
        cor = (np.arange(q_cols)[:, None] * self.ncols + self.col_of_row[None, :]).ravel()
        rows = (np.arange(q_rows)[:, None] * self.nrows_full + self.rows[None, :]).ravel()
        return Compression(cor, q_cols * self.ncols, rows, q_rows * self.nrows_full)

    def apply_T(self, X: np.ndarray) -> np.ndarray:
        """``X @ T`` with a fixed summation order (increasing row of T)."""
        out = np.zeros((X.shape[0], self.ncols), dtype=X.dtype)
        for rows, cols in _slot_plan(self.col_of_row):
            out[:, cols] += X[:, rows]
        return out


def _slot_plan(col_of_row):
    order = np.argsort(col_of_row, kind="stable")
    sorted_cols = col_of_row[order]
    starts = np.flatnonzero(np.r_[True, np.diff(sorted_cols) != 0])
    counts = np.diff(np.r_[starts, len(order)])
    occ = np.arange(len(order)) - np.repeat(starts, counts)
    slot = np.empty_like(occ)
    slot[order] = occ
    plan = []
    for s in range(int(slot.max()) + 1 if len(slot) else 0):
        rows = np.flatnonzero(slot == s)
        plan.append((rows, col_of_row[rows]))
    return plan


def symmetric_compression(n: int, k: int) -> Compression:
    return Compression(
        col_of_row=_sym_col_of_row(n, k),
        ncols=math.comb(n + k - 1, k),
        rows=_strict_rows(n, k),
        nrows_full=(n + k - 1) ** k,
    )


def build_T(n: int, k: int) -> sp.csr_matrix:
    """``n^k x C(n+k-1,k)`` matrix with ``x (x) ... (x) x`` in its range."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    cor = _sym_col_of_row(n, k)
    return sp.csr_matrix(
        (np.ones(len(cor)), (np.arange(len(cor)), cor)), shape=(len(cor), math.comb(n + k - 1, k))
    )


def build_L(n: int, k: int) -> sp.csr_matrix:
    """Selection of the rows with strictly increasing multi-index."""
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    rows = _strict_rows(n, k)
    return sp.csr_matrix(
        (np.ones(len(rows)), (np.arange(len(rows)), rows)), shape=(len(rows), (n + k - 1) ** k)
    )


def wide_deltas(a, bs) -> list:
    """Rectangular operator determinants of ``A + l_1 B_1 + ... + l_k B_k``."""
    a = np.asarray(a)
    bs = [np.asarray(b) for b in bs]
    k = len(bs)
    n = a.shape[1]
    if a.shape != (n + k - 1, n) or any(b.shape != a.shape for b in bs):
        raise ValueError(f"all matrices must be ({n + k - 1}, {n}) for k={k}")
    eq = [a] + bs
    return deltas_from_rows([eq] * k)


def _as_compression(L, T) -> Compression:
    if isinstance(T, Compression):
        return T
    T = sp.csr_matrix(T)
    L = sp.csr_matrix(L)
    if np.any(np.diff(T.indptr) != 1) or np.any(np.diff(L.indptr) != 1):
        raise ValueError("T and L must have exactly one nonzero per row")
    return Compression(T.indices.astype(np.int64), T.shape[1], L.indices.astype(np.int64), L.shape[1])


def compress(deltas, L, T=None) -> list:
    """``D_i = L Delta_i T`` for dense Delta matrices.

    ``L`` and ``T`` are 0/1 matrices (sparse or dense) or a single
    :class:`Compression` passed as ``L``.
    """
    comp = L if isinstance(L, Compression) else _as_compression(L, T)
    out = []
    for d in deltas:
        d = np.asarray(d)
        if d.shape != (comp.nrows_full, len(comp.col_of_row)):
            raise ValueError(
                f"Delta of shape {d.shape} does not conform to a "
                f"{comp.nrows_full} x {len(comp.col_of_row)} compression"
            )
        out.append(comp.apply_T(d[comp.rows]))
    return out


def _kron_rows(factors, idx):
    """Rows ``idx[:, j]`` of each factor, Kronecker-multiplied row by row."""
    out = factors[0][idx[:, 0]]
    for j, f in enumerate(factors[1:], start=1):
        rows = f[idx[:, j]]
        out = (out[:, :, None] * rows[:, None, :]).reshape(out.shape[0], -1)
    return out


def _selected_rows_on_demand(grid, nonzero, sel, dims, dtype):
    k = len(grid)
    idx = np.stack(np.unravel_index(sel, dims), axis=1)
    cols = math.prod(grid[i][0].shape[1] for i in range(k))
    out = np.zeros((len(sel), cols), dtype=dtype)
    for perm in itertools.permutations(range(k)):
        if not all(nonzero[i][perm[i]] for i in range(k)):
            continue
        term = _kron_rows([grid[i][perm[i]] for i in range(k)], idx)
        if permutation_sign(perm) > 0:
            out += term
        else:
            out -= term
    return out


def compressed_deltas(rows, comp: Compression, mem_cap: int | None = None, on_demand: bool | None = None):
    """``D_i = L Delta_i T`` straight from the equation rows.

    When the dense Delta matrices would exceed ``mem_cap`` bytes (or when
    ``on_demand`` is forced) only the selected rows are ever formed, in
    chunks that respect the cap.
    """
    rows = [[np.asarray(m) for m in row] for row in rows]
    k = len(rows)
    dims = tuple(row[0].shape[0] for row in rows)
    ncols_full = math.prod(row[0].shape[1] for row in rows)
    dtype = np.result_type(*[m for row in rows for m in row])
    item = np.dtype(dtype).itemsize
    cap = memory_cap() if mem_cap is None else mem_cap
    dense_bytes = (k + 1) * math.prod(dims) * ncols_full * item
    if on_demand is None:
        on_demand = dense_bytes > cap
    if not on_demand:
        return compress(deltas_from_rows(rows), comp)

    grids = [[list(row[1:]) for row in rows]]
    for i in range(1, k + 1):
        grids.append([[row[0] if j == i else row[j] for j in range(1, k + 1)] for row in rows])
    signs = [1] + [-1] * k
    chunk = max(1, int(cap // max(1, 3 * ncols_full * item)))
    out = [np.empty((len(comp.rows), comp.ncols), dtype=dtype) for _ in grids]
    for g, grid in enumerate(grids):
        nonzero = [[bool(np.any(m)) for m in row] for row in grid]
        for start in range(0, len(comp.rows), chunk):
            sel = comp.rows[start:start + chunk]
            block = _selected_rows_on_demand(grid, nonzero, sel, dims, dtype)
            if signs[g] < 0:
                block = -block
            out[g][start:start + len(sel)] = comp.apply_T(block)
    return out


@dataclass(frozen=True)
class VandermondeCompression:
    """Compression for the ``(3n+1) x 3n`` linearisation of a quadratic two-parameter pencil."""

    Ttilde: sp.csr_matrix
    Ltilde: sp.csr_matrix
    K: sp.csr_matrix
    R: np.ndarray
    S: sp.csr_matrix
    comp: Compression
    labels: list


def _monomial_duplication():
    # [1,l,m] (x) [1,l,m] = R [1, l, m, l^2, lm, m^2]
    mono = {(0, 0): 0, (1, 0): 1, (0, 1): 2, (2, 0): 3, (1, 1): 4, (0, 2): 5}
    base = [(0, 0), (1, 0), (0, 1)]
    R = np.zeros((9, 6))
    for a, u in enumerate(base):
        for b, v in enumerate(base):
            R[3 * a + b, mono[(u[0] + v[0], u[1] + v[1])]] = 1.0
    return R


def vandermonde_compression(n: int) -> VandermondeCompression:
    if n < 1:
        raise ValueError("n must be positive")
    j = np.arange(3 * n)
    K = sp.csr_matrix((np.ones(3 * n), (3 * (j % n) + j // n, j)), shape=(3 * n, 3 * n))
    S = sp.kron(sp.kron(sp.identity(3), K), sp.identity(n)).tocsr()
    R = _monomial_duplication()
    Tt = (S @ sp.kron(sp.csr_matrix(R), build_T(n, 2))).tocsr()
    Tt.sort_indices()

    labels = [("y", i) for i in range(1, n + 2)] + [("s", i) for i in range(1, n + 1)] + [
        ("t", i) for i in range(1, n + 1)
    ]
    size = 3 * n + 1
    sel = []
    for a, la in enumerate(labels):
        for b, lb in enumerate(labels):
            keep = (
                (la[0] == "y" and lb[0] == "y" and la[1] < lb[1])
                or (la[0] == "y" and lb[0] in ("s", "t"))
                or (la[0] == "s" and lb[0] == "t" and la[1] <= lb[1])
            )
            if keep:
                sel.append(a * size + b)
    sel = np.asarray(sel, dtype=np.int64)
    Lt = sp.csr_matrix((np.ones(len(sel)), (np.arange(len(sel)), sel)), shape=(len(sel), size * size))
    comp = Compression(Tt.indices.astype(np.int64), Tt.shape[1], sel, size * size)
    return VandermondeCompression(Tt, Lt, K, R, S, comp, labels)
