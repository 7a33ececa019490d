import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core import cache
from core.errors import ParameterError, UnsupportedOperatorError
from core.operators import (
    as_monotone, check_monotone, check_nonexpansive, known_solution, linear_map, make_problem,
    nonexpansive_from_monotone, resolvent, yosida, zero_map,
)


def test_bilinear_uv_gradient():
    P = make_problem("bilinear_uv")
    assert_allclose(P(np.array([1.0, 0.0])), [0.0, -1.0])
    assert P.lipschitz == 1.0
    assert_allclose(known_solution(P), [0.0, 0.0])


def test_u_squared_v_gradient():
    P = make_problem("u_squared_v")
    assert_allclose(P(np.array([1.0, 1.0])), [2.0, -1.0])
    assert P.lipschitz is None
    assert check_monotone(P, samples=300) >= -1e-10


def test_ouyang_xu_solution_and_norm():
    P = make_problem("ouyang_xu", n=10)
    A = as_monotone(P)
    x_star = known_solution(P)
    assert_allclose(A(x_star), np.zeros(20), atol=1e-10)
    assert np.linalg.norm(A.matrix, 2) <= 1.0 + 1e-12


def test_ouyang_xu_strong_monotone():
    P = make_problem("ouyang_xu", n=6, mu=0.1)
    assert check_monotone(P) >= 0.1 - 1e-10
    assert P.strong_mu == 0.1


def test_bilinear_matrix_block_structure():
    M = np.array([[1.0, 2.0], [0.0, 1.0], [3.0, 0.0]])
    P = make_problem("bilinear_matrix", M=M)
    assert P.dim == 5
    assert check_monotone(P) == pytest.approx(0.0, abs=1e-12)
    assert P.lipschitz == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)


def test_huber_lagrangian_monotone():
    P = make_problem("huber_lagrangian", n=10, m=4, seed=0)
    assert P.dim == 14
    assert check_monotone(P, samples=200) >= -1e-10


def test_random_generators_require_seed():
    with pytest.raises(ParameterError):
        make_problem("random_linear_monotone", d=3)
    with pytest.raises(ParameterError):
        make_problem("huber_lagrangian", n=10, m=4)


def test_unknown_problem():
    with pytest.raises(ParameterError):
        make_problem("bilinear_vu")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.floats(0.1, 3.0))
def test_resolvent_solves_inclusion(seed, d, gamma):
    A = make_problem("random_linear_monotone", d=d, seed=seed, shifted=True)
    y = np.random.default_rng(seed + 1).standard_normal(d)
    x = resolvent(A, y, gamma)
    assert_allclose(x + gamma * A(x), y, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_reflected_resolvent_is_nonexpansive(seed, d):
    A = make_problem("random_linear_monotone", d=d, seed=seed, shifted=True)
    T = nonexpansive_from_monotone(A, 1.0)
    assert check_nonexpansive(T, samples=200, seed=seed) <= 1.0 + 1e-9
    assert_allclose(T(A.known_zero), A.known_zero, atol=1e-9)


def test_yosida_linear_matches_definition():
    A = make_problem("random_linear_monotone", d=4, seed=3, shifted=True)
    Ad = yosida(A, 0.1)
    x = np.arange(4.0)
    assert_allclose(Ad(x), (x - resolvent(A, x, 0.1)) / 0.1, atol=1e-10)
    assert Ad.lipschitz <= 10.0 + 1e-12


def test_analytic_operator_without_resolvent():
    P = make_problem("u_squared_v")
    with pytest.raises(UnsupportedOperatorError):
        nonexpansive_from_monotone(as_monotone(P))


def test_linear_map_requires_square():
    with pytest.raises(ParameterError):
        linear_map(np.ones((2, 3)))


def test_zero_map_and_cache():
    cache.clear()
    Z = zero_map(3)
    assert_allclose(resolvent(Z, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
    key = f"lu:{cache.array_hash(Z.matrix)}:1.0"
    assert cache.get(key) is not None


def test_cache_eviction_keeps_capacity():
    cache.clear()
    for i in range(cache.MAX_ENTRIES + 10):
        cache.set_(f"k{i}", i)
    assert cache.size() == cache.MAX_ENTRIES
    assert cache.get("k0") is None
    assert cache.get(f"k{cache.MAX_ENTRIES + 9}") == cache.MAX_ENTRIES + 9
    cache.set_(f"k{cache.MAX_ENTRIES + 9}", -1)
    assert cache.size() == cache.MAX_ENTRIES
    cache.clear()


def test_cache_concurrent_writers_at_capacity():
    from concurrent.futures import ThreadPoolExecutor

    cache.clear()
    for i in range(cache.MAX_ENTRIES):
        cache.set_(f"seed{i}", i)

    def writer(t: int) -> int:
        for i in range(500):
            cache.set_(f"t{t}:{i}", i)
            cache.get(f"t{t}:{i - 1}")
        return t

    with ThreadPoolExecutor(max_workers=8) as ex:
        assert sorted(ex.map(writer, range(8))) == list(range(8))
    assert cache.size() <= cache.MAX_ENTRIES
    cache.clear()
