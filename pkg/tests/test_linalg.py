import itertools

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from rmep.datasets import linear_example
from rmep.linalg import (
    EigSet,
    MepSystem,
    MixedSystem,
    SingularProblemError,
    StaircaseError,
    ToleranceConfig,
    delta_family,
    is_real_value,
    joint_commuting_eigs,
    kron,
    mixed_delta_family,
    multiset_distance,
    numerical_rank,
    op_det,
    permutation_sign,
    rank_drop_test,
    regular_part,
    staircase_regular_part,
)
from rmep.linear import RectPencil

from _helpers import LINEAR_EXAMPLE_EIGS, LINEAR_EXAMPLE_SPURIOUS

seeds = st.integers(0, 2**32 - 1)


def random_mep(rng, dims, complex_=False):
    k = len(dims)

    def m(d):
        a = rng.standard_normal((d, d))
        return a + 1j * rng.standard_normal((d, d)) if complex_ else a

    return MepSystem([[m(d) for _ in range(k + 1)] for d in dims])


def det_residual(system, lam):
    """Worst |det W_i(lam)| relative to (||V_i0|| + sum_j |lam_j| ||V_ij||)^n_i."""
    worst = 0.0
    for i in range(system.k):
        W = system.evaluate(i, lam)
        row = system.equations[i]
        size = np.linalg.norm(row[0], 2) + sum(abs(l) * np.linalg.norm(v, 2) for l, v in zip(lam, row[1:]))
        scale = size ** W.shape[0]
        worst = max(worst, abs(np.linalg.det(W)) / scale)
    return worst


# --- kron ------------------------------------------------------------------


def test_kron_identity():
    assert np.array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))


def test_kron_blocks():
    a = np.array([[1, 2], [3, 4]])
    b = np.array([[0, 1], [1, 0]])
    out = kron(a, b)
    assert out.shape == (4, 4)
    assert np.array_equal(out[:2, :2], b)
    assert np.array_equal(out[:2, 2:], 2 * b)
    assert np.array_equal(out[2:, 2:], 4 * b)


def test_kron_mixed_product_2x2():
    rng = np.random.default_rng(0)
    A, B, C, D = (rng.standard_normal((2, 2)) for _ in range(4))
    lhs = kron(A, B) @ kron(C, D)
    rhs = kron(A @ C, B @ D)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_kron_mixed_product_property(seed):
    rng = np.random.default_rng(seed)
    A, B, C, D = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)) for _ in range(4))
    bound = 1e-12 * np.prod([np.linalg.norm(x, 2) for x in (A, B, C, D)])
    assert np.linalg.norm(kron(A, B) @ kron(C, D) - kron(A @ C, B @ D)) <= bound


# --- op_det ----------------------------------------------------------------


def test_permutation_sign():
    assert permutation_sign([0, 1, 2]) == 1
    assert permutation_sign([1, 0, 2]) == -1
    assert permutation_sign([1, 2, 0]) == 1


def test_op_det_k1():
    V = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(op_det([[V]]), V)


def test_op_det_k2():
    rng = np.random.default_rng(1)
    V11, V12, V21, V22 = (rng.standard_normal((2, 2)) for _ in range(4))
    assert np.allclose(op_det([[V11, V12], [V21, V22]]), np.kron(V11, V22) - np.kron(V12, V21), atol=0)


def test_op_det_k3_against_expansion():
    rng = np.random.default_rng(2)
    G = [[rng.standard_normal((2, 2)) for _ in range(3)] for _ in range(3)]
    # independent six-term expansion, written out by hand
    k3 = lambda a, b, c: np.kron(np.kron(a, b), c)  # noqa: E731
    expected = (
        k3(G[0][0], G[1][1], G[2][2]) - k3(G[0][0], G[1][2], G[2][1])
        - k3(G[0][1], G[1][0], G[2][2]) + k3(G[0][1], G[1][2], G[2][0])
        + k3(G[0][2], G[1][0], G[2][1]) - k3(G[0][2], G[1][1], G[2][0])
    )
    out = op_det(G)
    assert np.linalg.norm(out - expected) <= 1e-13 * np.linalg.norm(expected)


def test_op_det_rectangular_rows():
    rng = np.random.default_rng(3)
    G = [[rng.standard_normal((3, 2)) for _ in range(2)], [rng.standard_normal((4, 5)) for _ in range(2)]]
    assert op_det(G).shape == (12, 10)


def test_op_det_dimension_mismatch():
    with pytest.raises(ValueError, match="row 0"):
        op_det([[np.eye(2), np.eye(3)], [np.eye(2), np.eye(2)]])
    with pytest.raises(ValueError):
        op_det([[np.eye(2)], [np.eye(2)]])


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 3), st.data())
def test_op_det_column_swap_antisymmetry_exact(k, data):
    # integer entries: every product is exact, so the sign flip is bitwise
    seed = data.draw(seeds)
    rng = np.random.default_rng(seed)
    G = [[rng.integers(-5, 6, (2, 2)).astype(float) for _ in range(k)] for _ in range(k)]
    i, j = data.draw(st.sampled_from(list(itertools.combinations(range(k), 2))))
    H = [list(row) for row in G]
    for row in H:
        row[i], row[j] = row[j], row[i]
    assert np.array_equal(op_det(H), -op_det(G))


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_op_det_column_swap_antisymmetry_float(seed):
    rng = np.random.default_rng(seed)
    G = [[rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(3)] for _ in range(3)]
    H = [[row[2], row[1], row[0]] for row in G]
    a, b = op_det(G), op_det(H)
    assert np.linalg.norm(a + b) <= 1e-14 * np.linalg.norm(a)


# --- delta_family ----------------------------------------------------------


def test_delta_family_zero_constant_column():
    rng = np.random.default_rng(4)
    sys_ = MepSystem([[np.zeros((2, 2))] + [rng.standard_normal((2, 2)) for _ in range(2)] for _ in range(2)])
    d = delta_family(sys_)
    assert not np.any(d[1]) and not np.any(d[2])
    assert d[0].shape == (4, 4)


def _newton_roots(system, starts, iters=60):
    """Roots of det W_1 = det W_2 = 0 by Newton from many starting points."""

    def F(lam):
        return np.array([np.linalg.det(system.evaluate(i, lam)) for i in range(system.k)])

    roots = []
    h = 1e-7
    for lam in starts:
        for _ in range(iters):
            f = F(lam)
            J = np.column_stack([(F(lam + h * e) - f) / h for e in np.eye(system.k)])
            try:
                step = np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                break
            lam = lam + step
            if np.linalg.norm(step) < 1e-14 * (1 + np.linalg.norm(lam)):
                break
        if np.linalg.norm(F(lam)) < 1e-10 and not any(np.linalg.norm(lam - r) < 1e-7 for r in roots):
            roots.append(lam)
    return np.array(roots)


def test_delta_family_matches_determinant_roots():
    rng = np.random.default_rng(5)
    system = random_mep(rng, (2, 2))
    d = delta_family(system)
    eigs = joint_commuting_eigs(d[0], d[1:], rng=0)
    starts = 3 * (rng.standard_normal((300, 2)) + 1j * rng.standard_normal((300, 2)))
    roots = _newton_roots(system, starts)
    assert len(roots) == 4
    assert multiset_distance(eigs.values, roots) < 1e-8


def test_delta_family_diagonal_system_closed_form():
    rng = np.random.default_rng(6)
    n, k = 3, 2
    diag = rng.standard_normal((k, k + 1, n))  # diag[i, j] = diagonal of V_ij
    system = MepSystem([[np.diag(diag[i, j]) for j in range(k + 1)] for i in range(k)])
    d = delta_family(system)
    eigs = joint_commuting_eigs(d[0], d[1:], rng=0)
    expected = []
    for idx in itertools.product(range(n), repeat=k):
        M = np.array([[diag[i, j + 1, idx[i]] for j in range(k)] for i in range(k)])
        rhs = -np.array([diag[i, 0, idx[i]] for i in range(k)])
        expected.append(np.linalg.solve(M, rhs))
    assert multiset_distance(eigs.values, np.array(expected)) < 1e-10


# --- mixed_delta_family ----------------------------------------------------


def _arma_like(rng, n):
    aux = [[[0, 0], [1, 0]], np.zeros((2, 2)), np.eye(2), [[0, 1], [0, 0]]]
    rect = [rng.standard_normal((n + 1, n)) for _ in range(4)]
    return MixedSystem([aux], rect)


def test_mixed_delta_block_structure():
    rng = np.random.default_rng(7)
    n = 3
    system = _arma_like(rng, n)
    A00, A10, A01, A02 = system.rect
    d0 = mixed_delta_family(system)[0]
    p, q = (n + 1) ** 2, n**2
    assert d0.shape == (2 * p, 2 * q)
    assert np.allclose(d0[:p, :q], np.kron(A02, A10) - np.kron(A10, A02), atol=1e-14)
    assert np.allclose(d0[:p, q:], np.kron(A10, A01) - np.kron(A01, A10), atol=1e-14)
    assert not np.any(d0[p:, :q])
    assert np.allclose(d0[p:, q:], d0[:p, :q], atol=0)


def test_mixed_delta_zero_rect():
    aux = [[[0, 0], [1, 0]], np.zeros((2, 2)), np.eye(2), [[0, 1], [0, 0]]]
    system = MixedSystem([aux], [np.zeros((3, 2))] * 4)
    assert all(not np.any(d) for d in mixed_delta_family(system))


def test_mixed_delta_lti_dimensions():
    rng = np.random.default_rng(8)
    n = 3
    squares = [[rng.standard_normal((2, 2)) for _ in range(5)] for _ in range(2)]
    system = MixedSystem(squares, [rng.standard_normal((n + 1, n)) for _ in range(5)])
    ds = mixed_delta_family(system)
    assert len(ds) == 5
    assert all(d.shape == (4 * (n + 1) ** 2, 4 * n**2) for d in ds)


def test_mixed_system_validation():
    with pytest.raises(ValueError, match="s \\+ r"):
        MixedSystem([[np.eye(2)] * 3, [np.eye(2)] * 3], [np.zeros((2, 2))] * 3)
    with pytest.raises(ValueError, match="rectangular"):
        MixedSystem([], [np.zeros((3, 2))] * 4)


# --- rank_drop_test --------------------------------------------------------


def test_rank_drop_example_eigenvalue():
    p = linear_example()
    ok, res, x = rank_drop_test(p, LINEAR_EXAMPLE_EIGS[0])
    # 4-decimal input: the residual is small but not at machine precision
    assert res < 1e-4
    exact = np.array([2.639286889528897, 3.0435455238297346])
    ok, res, x = rank_drop_test(p, exact)
    assert ok and res < 1e-13
    M = p.evaluate(exact)
    assert np.linalg.norm(M @ x) <= 1e-12 * np.linalg.norm(M, 2)


def test_rank_drop_spurious_fails():
    ok, res, _ = rank_drop_test(linear_example(), LINEAR_EXAMPLE_SPURIOUS)
    assert not ok and res > 1e-3


def test_rank_drop_stacked_identity_never_passes():
    n, k = 3, 2
    A = np.vstack([np.eye(n), np.zeros((k - 1, n))])
    p = RectPencil.linear(A, [np.zeros_like(A)] * k)
    rng = np.random.default_rng(9)
    for lam in rng.standard_normal((100, k)) + 1j * rng.standard_normal((100, k)):
        ok, res, _ = rank_drop_test(p, lam)
        assert not ok and res == pytest.approx(1.0)


def test_rank_drop_non_finite():
    with pytest.raises(ValueError):
        rank_drop_test(linear_example(), [np.nan, 0.0])


# --- joint_commuting_eigs --------------------------------------------------


def test_joint_k1_is_generalized_eig():
    rng = np.random.default_rng(10)
    A, B = rng.standard_normal((2, 6, 6))
    eigs = joint_commuting_eigs(B, [A], rng=1)
    expected = sla.eigvals(A, B)
    assert multiset_distance(eigs.values, expected[:, None]) < 1e-10


def test_joint_scalar_family():
    rng = np.random.default_rng(11)
    d0 = rng.standard_normal((5, 5))
    c = [2.0, -0.5j, 3.0]
    eigs = joint_commuting_eigs(d0, [ci * d0 for ci in c], rng=0)
    assert len(eigs) == 5
    assert np.allclose(eigs.values, np.tile(c, (5, 1)), atol=1e-12)


def test_joint_singular_d0_raises():
    with pytest.raises(SingularProblemError):
        joint_commuting_eigs(np.zeros((3, 3)), [np.eye(3)])


def test_joint_random_2ep_satisfies_determinants():
    rng = np.random.default_rng(12)
    system = random_mep(rng, (2, 2))
    d = delta_family(system)
    eigs = joint_commuting_eigs(d[0], d[1:], rng=0)
    assert len(eigs) == 4
    for lam in eigs.values:
        assert det_residual(system, lam) < 1e-8


def test_joint_multiple_eigenvalues_repeated():
    # commuting family with a defective (Jordan) block: tuples repeat by multiplicity
    rng = np.random.default_rng(13)
    J = np.array([[1.0, 1, 0, 0], [0, 1, 0, 0], [0, 0, 2, 0], [0, 0, 0, 3]])
    X2 = np.diag([5.0, 5.0, 6.0, 7.0]) + np.diag([1.0, 0, 0], 1) * 0.5
    V = rng.standard_normal((4, 4))
    Vi = np.linalg.inv(V)
    d0 = rng.standard_normal((4, 4))
    eigs = joint_commuting_eigs(d0, [d0 @ V @ J @ Vi, d0 @ V @ X2 @ Vi], rng=0)
    expected = np.array([[1, 5], [1, 5], [2, 6], [3, 7]], dtype=complex)
    assert multiset_distance(eigs.values, expected) < 1e-6


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(2, 3), st.integers(1, 3))
def test_joint_eigs_satisfy_determinants_property(seed, k, n):
    rng = np.random.default_rng(seed)
    system = random_mep(rng, (n,) * k, complex_=True)
    d = delta_family(system)
    eigs = joint_commuting_eigs(d[0], d[1:], rng=seed)
    assert len(eigs) == n**k
    for lam in eigs.values:
        assert det_residual(system, lam) < 1e-8


# --- staircase -------------------------------------------------------------


def _hidden_singular_family(rng, m, k):
    """Regular part with known eigenvalues padded with L_1 and L_1^T blocks,
    mixed by random orthogonal transformations."""
    lam = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    V = rng.standard_normal((m, m))
    R = rng.standard_normal((m, m))
    reg0 = R
    regs = [R @ V @ np.diag(lam[:, i]) @ np.linalg.inv(V) for i in range(k)]
    N = m + 3
    d0 = np.zeros((N, N), dtype=complex)
    ds = [np.zeros((N, N), dtype=complex) for _ in range(k)]
    d0[:m, :m] = reg0
    for i in range(k):
        ds[i][:m, :m] = regs[i]
    # L_1 block (1 x 2) at rows m, cols m..m+1; L_1^T block (2 x 1) at rows m+1..m+2, col m+2
    d0[m, m] = 1.0
    d0[m + 1, m + 2] = 1.0
    for i in range(k):
        ds[i][m, m + 1] = rng.standard_normal()
        ds[i][m + 2, m + 2] = rng.standard_normal()
    P = np.linalg.qr(rng.standard_normal((N, N)))[0]
    Q = np.linalg.qr(rng.standard_normal((N, N)))[0]
    return P @ d0 @ Q, [P @ d @ Q for d in ds], lam


def test_staircase_nonsingular_equals_joint():
    rng = np.random.default_rng(14)
    d0 = rng.standard_normal((6, 6))
    ds = [rng.standard_normal((6, 6)) for _ in range(2)]
    ds = [d0 @ np.linalg.matrix_power(np.linalg.solve(d0, ds[0]), i + 1) for i in range(2)]
    a = joint_commuting_eigs(d0, ds, rng=0)
    b = staircase_regular_part(d0, ds, rng=0)
    assert multiset_distance(a.values, b.values) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_staircase_recovers_regular_part(seed):
    rng = np.random.default_rng(100 + seed)
    d0, ds, lam = _hidden_singular_family(rng, 5, 2)
    eigs = staircase_regular_part(d0, ds, rng=seed)
    assert len(eigs) == 5
    assert multiset_distance(eigs.values, lam) < 1e-8
    assert eigs.extra["regular_size"] == 5


def test_staircase_common_zero_row_and_column():
    rng = np.random.default_rng(15)
    lam = rng.standard_normal((4, 2))
    R = rng.standard_normal((4, 4))
    V = rng.standard_normal((4, 4))
    pad = lambda a: np.pad(a, ((0, 1), (0, 1)))  # noqa: E731
    d0 = pad(R)
    ds = [pad(R @ V @ np.diag(lam[:, i]) @ np.linalg.inv(V)) for i in range(2)]
    eigs = staircase_regular_part(d0, ds, rng=0)
    assert multiset_distance(eigs.values, lam) < 1e-8


def test_staircase_perturb_fallback():
    rng = np.random.default_rng(16)
    d0, ds, lam = _hidden_singular_family(rng, 4, 2)
    # accept tuples close to a known eigenvalue (the role of the rank test)
    accept = lambda z: np.min(np.linalg.norm(lam - z, axis=1)) < 1e-5  # noqa: E731
    eigs = staircase_regular_part(d0, ds, perturb=True, accept=accept, rng=0)
    assert len(eigs) == 4
    assert multiset_distance(eigs.values, lam) < 1e-5


def test_regular_part_iteration_cap():
    rng = np.random.default_rng(17)
    d0, ds, _ = _hidden_singular_family(rng, 3, 2)
    with pytest.raises(StaircaseError):
        regular_part(d0, ds, max_iter=0)


def test_regular_part_shape_check():
    with pytest.raises(ValueError):
        regular_part(np.eye(3), [np.eye(2)])


# --- small utilities -------------------------------------------------------


def test_tolerance_config_validation():
    ToleranceConfig(1e-12, 1e-9, 1e-6)
    for bad in (0.0, 1.0, -1e-3):
        with pytest.raises(ValueError):
            ToleranceConfig(rank_tol=bad)


def test_numerical_rank():
    s = np.array([1.0, 1e-3, 1e-12])
    assert numerical_rank(s, 1e-10) == 2
    assert numerical_rank(s, 1e-10, scale=1e8) == 1
    assert numerical_rank(np.zeros(3), 1e-10) == 0
    assert numerical_rank(np.array([]), 1e-10) == 0


def test_eigset_sorted_and_real_mask():
    e = EigSet(np.array([[1 + 1j, 0], [1 - 1j, 0], [-2, 5], [1 + 1e-12j, 3]]))
    s = e.sorted()
    assert np.array_equal(s.values[:, 0].real, [-2, 1, 1, 1])
    assert list(s.values[1:, 0].imag) == [-1, 1e-12, 1]
    assert list(s.real_mask()) == [True, False, True, False]


def test_is_real_value_threshold():
    assert is_real_value(100 + 1e-7j)
    assert not is_real_value(1 + 1e-7j)


def test_multiset_distance():
    a = np.array([[1, 2], [3, 4]], dtype=complex)
    assert multiset_distance(a, a[::-1]) == 0.0
    assert multiset_distance(a, a[:1]) == np.inf
    assert multiset_distance(a, a + 1e-3) > 1e-4


# --- invariant suites ------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
def test_commutation_suite(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))
    dims = tuple(int(d) for d in rng.integers(1, 5 if k == 2 else 4, size=k))
    d = delta_family(random_mep(rng, dims, complex_=bool(seed % 2)))
    X = [np.linalg.solve(d[0], di) for di in d[1:]]
    for i in range(k):
        for j in range(i + 1, k):
            bound = 1e-8 * np.linalg.norm(X[i]) * np.linalg.norm(X[j])
            assert np.linalg.norm(X[i] @ X[j] - X[j] @ X[i]) <= bound


@pytest.mark.parametrize("seed", range(20))
def test_determinant_suite(seed):
    rng = np.random.default_rng(1000 + seed)
    k = int(rng.integers(2, 4))
    dims = tuple(int(d) for d in rng.integers(1, 5 if k == 2 else 3, size=k))
    system = random_mep(rng, dims, complex_=True)
    d = delta_family(system)
    eigs = joint_commuting_eigs(d[0], d[1:], rng=seed)
    assert len(eigs) == np.prod(dims)
    assert max(det_residual(system, lam) for lam in eigs.values) < 1e-8


def test_staircase_quadratic_example():
    from rmep.compress import compressed_deltas, vandermonde_compression
    from rmep.datasets import quadratic_example
    from rmep.poly import quadratic_linearization

    from _helpers import max_abs_mismatch, quadratic_example_eigs

    q = quadratic_example()
    ds = compressed_deltas([list(quadratic_linearization(q))] * 2, vandermonde_compression(2).comp)
    assert ds[0].shape == (18, 18)
    eigs = staircase_regular_part(ds[0], ds[1:], rng=0)
    assert len(eigs) == 12
    assert max_abs_mismatch(quadratic_example_eigs(), eigs.values) < 5e-4


def test_robust_svd_falls_back_to_gesvd(monkeypatch):
    from rmep import linalg

    real_svd = sla.svd
    drivers = []

    def flaky(a, lapack_driver="gesdd", **kw):
        drivers.append(lapack_driver)
        if lapack_driver == "gesdd":
            raise np.linalg.LinAlgError("SVD did not converge")
        return real_svd(a, lapack_driver=lapack_driver, **kw)

    monkeypatch.setattr(linalg.sla, "svd", flaky)
    a = np.random.default_rng(0).standard_normal((5, 3))
    u, s, vh = linalg.robust_svd(a)
    assert drivers == ["gesdd", "gesvd"]
    assert np.allclose(u[:, :3] * s @ vh, a)
    assert np.allclose(linalg.robust_svd(a, compute_uv=False), np.linalg.svd(a, compute_uv=False))
