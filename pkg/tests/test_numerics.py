import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core.errors import ContractViolation, ParameterError, SingularSystemError
from core.numerics import (
    as_vector, expm, lu_factor, min_eigen_sym, power_norm, probe_quadratic, solve_linear,
    solve_lower_triangular,
)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_lower_triangular_matches_dense_solve(seed, n):
    rng = np.random.default_rng(seed)
    L = np.tril(rng.standard_normal((n, n))) + 3.0 * np.eye(n)
    b = rng.standard_normal(n)
    assert_allclose(solve_lower_triangular(L, b), np.linalg.solve(L, b), rtol=1e-10, atol=1e-12)


def test_lower_triangular_rejects_zero_diagonal():
    L = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(SingularSystemError):
        solve_lower_triangular(L, [1.0, 1.0])


def test_lower_triangular_rejects_upper_entries():
    with pytest.raises(ContractViolation):
        solve_lower_triangular([[1.0, 1.0], [0.0, 1.0]], [1.0, 1.0])


def test_lower_triangular_shape_mismatch():
    with pytest.raises(ParameterError):
        solve_lower_triangular(np.eye(2), [1.0, 2.0, 3.0])


def test_lu_rejects_singular():
    with pytest.raises(SingularSystemError):
        lu_factor([[1.0, 2.0], [2.0, 4.0]])


def test_solve_linear():
    M = np.array([[4.0, 1.0], [2.0, 3.0]])
    assert_allclose(M @ solve_linear(M, [1.0, 2.0]), [1.0, 2.0], atol=1e-12)


def test_min_eigen_sym():
    assert min_eigen_sym(np.diag([3.0, -1.0, 2.0])) == pytest.approx(-1.0)
    with pytest.raises(ContractViolation):
        min_eigen_sym([[0.0, 1.0], [0.0, 0.0]])


def test_power_norm_diagonal():
    assert power_norm(np.diag([3.0, 1.0, 0.5])) == pytest.approx(3.0, rel=1e-6)
    assert power_norm(np.zeros((3, 3))) == 0.0


def test_expm_rotation():
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert_allclose(expm(J, np.pi / 2), [[0.0, 1.0], [-1.0, 0.0]], atol=1e-12)
    assert_allclose(expm(np.zeros((3, 3))), np.eye(3))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_probe_quadratic_recovers_matrix(seed, n):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    S = B + B.T
    assert_allclose(probe_quadratic(lambda g: float(g @ S @ g), n), S, atol=1e-10)


def test_as_vector_rejects_nan():
    with pytest.raises(ContractViolation):
        as_vector([1.0, np.nan])
    with pytest.raises(ParameterError):
        as_vector(np.ones((2, 2)))
