import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from harmocont.errors import ContractError, SingularMatrixError
from harmocont.linalg import BorderedSystem, eigenvalues, lu_solve, solve_bordered, sort_spectrum


def test_identity_solve():
    b = np.array([1.0, -2.0, 3.5])
    np.testing.assert_array_equal(lu_solve(np.eye(3), b), b)


def test_diagonal_solve():
    np.testing.assert_allclose(lu_solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0])


def test_singular_matrix_reports_pivot():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(SingularMatrixError) as info:
        lu_solve(A, [1.0, 1.0])
    assert info.value.pivot == 1


def test_shape_errors():
    with pytest.raises(ContractError):
        lu_solve(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ContractError):
        lu_solve(np.eye(2), np.ones(3))


def test_decoupled_bordered_system():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b, c = rng.normal(size=5), rng.normal(size=2)
    sys = BorderedSystem(A, np.zeros((5, 2)), np.zeros((2, 5)), np.eye(2), np.concatenate([b, c]))
    x = solve_bordered(sys)
    np.testing.assert_allclose(x[:5], lu_solve(A, b), rtol=1e-13)
    np.testing.assert_allclose(x[5:], c)


def test_pure_corner_system():
    D = np.array([[3.0, 1.0], [1.0, 2.0]])
    sys = BorderedSystem(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), D, np.array([1.0, 2.0]))
    np.testing.assert_allclose(solve_bordered(sys), lu_solve(D, [1.0, 2.0]))


def test_mismatched_borders_rejected():
    sys = BorderedSystem(np.eye(3), np.zeros((3, 2)), np.zeros((1, 3)), np.zeros((1, 2)), np.zeros(4))
    assert sys.shape == (4, 5)
    with pytest.raises(ContractError):
        solve_bordered(sys)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(1, 25), m=st.integers(1, 4))
def test_bordered_matches_dense_solve(seed, N, m):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(N, N))
    B = rng.normal(size=(N, m))
    C = rng.normal(size=(m, N))
    D = rng.normal(size=(m, m))
    rhs = rng.normal(size=N + m)
    full = np.block([[A, B], [C, D]])
    assume(np.linalg.cond(full) < 1e4)
    x = solve_bordered(BorderedSystem(A, B, C, D, rhs))
    ref = np.linalg.solve(full, rhs)
    assert np.max(np.abs(x - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_twenty_bordered_random():
    rng = np.random.default_rng(20)
    A = rng.normal(size=(20, 20))
    B, C = rng.normal(size=(20, 1)), rng.normal(size=(1, 20))
    D = rng.normal(size=(1, 1))
    rhs = rng.normal(size=21)
    x = solve_bordered(BorderedSystem(A, B, C, D, rhs))
    ref = np.linalg.solve(np.block([[A, B], [C, D]]), rhs)
    assert np.max(np.abs(x - ref) / np.max(np.abs(ref))) < 1e-10


def test_eigenvalue_examples():
    np.testing.assert_allclose(eigenvalues(np.diag([1.0, 2.0, 3.0])).values, [3, 2, 1])
    beta = 2.7
    vals = eigenvalues([[0.0, -beta], [beta, 0.0]]).values
    np.testing.assert_allclose(vals, [beta * 1j, -beta * 1j], atol=1e-14)


def test_spectrum_order():
    vals = sort_spectrum([1 - 2j, 1 + 2j, 3, -1])
    np.testing.assert_array_equal(vals, [3, 1 + 2j, 1 - 2j, -1])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10))
def test_eigenvalue_invariants(seed, n):
    A = np.random.default_rng(seed).normal(size=(n, n))
    spec = eigenvalues(A)
    vals = spec.values
    assert abs(np.sum(vals).real - np.trace(A)) <= 1e-10 * max(1.0, np.sum(np.abs(A)))
    det = np.linalg.det(A)
    assert abs(np.prod(vals).real - det) <= 1e-8 * max(1.0, abs(det), np.prod(np.abs(vals)))
    # conjugate pairs
    for v in spec.complex_pairs():
        assert np.min(np.abs(vals - np.conj(v))) < 1e-10 * max(1.0, abs(v))
    # sorted by descending real part
    assert np.all(np.diff(vals.real) <= 1e-12)
