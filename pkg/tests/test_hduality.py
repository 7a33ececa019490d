import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core.errors import ParameterError
from core.hduality import (
    dualize_weights, f_inverse, f_map, f_matrix, is_psd, make_weights, named_certificate,
    named_weights, primal_expression, psd_margin, s_form, verify_duality,
)
from core.hmatrix import hmatrix, named_gradient_hmatrix, named_hmatrix


def random_case(seed: int, N: int):
    rng = np.random.default_rng(seed)
    H = hmatrix(np.tril(rng.standard_normal((N - 1, N - 1))))
    u = make_weights(rng.uniform(0.2, 3.0, N - 1).tolist(), tau=float(rng.uniform(0.5, 4.0)))
    return H, u


def test_named_weights_n3():
    assert_allclose(named_weights("OHM", 3).w, [2.0 / 3.0, 2.0])
    dual = named_weights("DualOHM", 3)
    assert dual.kind == "dual"
    assert_allclose(dual.w, [0.5, 1.5])
    assert dual.tau == 3.0


@pytest.mark.parametrize("N", [2, 3, 6, 12])
def test_dual_ohm_weights_are_dualized_ohm_weights(N):
    v = dualize_weights(named_weights("OHM", N))
    assert v.kind == "dual"
    assert_allclose(v.w, named_weights("DualOHM", N).w, rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9))
def test_dualize_is_involution(seed, N):
    _, u = random_case(seed, N)
    back = dualize_weights(dualize_weights(u))
    assert back.kind == "primal"
    assert_allclose(back.w, u.w, rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9))
def test_f_inverse_undoes_f_map(seed, N):
    _, u = random_case(seed, N)
    g = np.random.default_rng(seed + 1).standard_normal((N, 3))
    assert_allclose(f_inverse(u, f_map(u, g)), g, atol=1e-9)
    assert_allclose(f_matrix(u) @ g, f_map(u, g), atol=1e-12)


def test_f_map_shape_check():
    u = named_weights("OHM", 4)
    with pytest.raises(ParameterError):
        f_map(u, np.zeros((3, 2)))
    with pytest.raises(ParameterError):
        f_inverse(u, np.zeros((5, 2)))


@pytest.mark.parametrize("N", [2, 3, 5, 10])
def test_ohm_duality(N):
    rep = verify_duality(named_hmatrix("OHM", N), named_weights("OHM", N))
    assert rep.discrepancy <= 1e-9
    assert rep.psd_primal and rep.psd_dual
    assert rep.sign_agrees


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 8))
def test_duality_holds_for_any_lower_triangular_h(seed, N):
    H, u = random_case(seed, N)
    rep = verify_duality(H, u, trials=4, seed=seed)
    assert rep.discrepancy <= 1e-8


def test_ohm_form_vanishes_at_n2():
    H, u = named_hmatrix("OHM", 2), named_weights("OHM", 2)
    S = primal_expression(H, u)
    for g in np.random.default_rng(0).standard_normal((5, 2, 3)):
        assert abs(S(g)) <= 1e-12
    assert_allclose(s_form(H, u).S, np.zeros((2, 2)), atol=1e-12)


@pytest.mark.parametrize("kind", ["OHM", "DualOHM"])
@pytest.mark.parametrize("N", [2, 3, 5, 10, 20])
def test_named_certificates_are_psd(kind, N):
    Q, psd = named_certificate(kind, N)
    assert psd
    assert Q.n == N
    assert is_psd(Q)
    assert psd_margin(Q) >= -1e-9 * (1.0 + np.linalg.norm(Q.S, 2))


def test_verify_duality_rejects_bad_input():
    H = named_hmatrix("OHM", 4)
    with pytest.raises(ParameterError):
        verify_duality(H, named_weights("DualOHM", 4))
    with pytest.raises(ParameterError):
        verify_duality(H, named_weights("OHM", 5))
    with pytest.raises(ParameterError):
        verify_duality(H, named_weights("OHM", 4), trials=0)
    with pytest.raises(ParameterError):
        verify_duality(named_gradient_hmatrix("FEG", 2), named_weights("OHM", 5))


def test_weight_validation():
    with pytest.raises(ParameterError):
        make_weights([1.0, 0.0], tau=2.0)
    with pytest.raises(ParameterError):
        named_weights("OHM", 1)
    with pytest.raises(ParameterError):
        named_weights("FEG", 4)


def test_f_map_small_example():
    u = make_weights([2.0], tau=1.0)
    assert_allclose(f_map(u, [0.0, 1.0]), [3.0, 1.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 9), st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_f_map_is_linear(seed, N, a, b):
    _, u = random_case(seed, N)
    rng = np.random.default_rng(seed + 2)
    g, h = rng.standard_normal((N, 2)), rng.standard_normal((N, 2))
    assert_allclose(f_map(u, a * g + b * h), a * f_map(u, g) + b * f_map(u, h), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 7))
def test_psd_status_agrees_across_duality(seed, N):
    H, u = random_case(seed, N)
    rep = verify_duality(H, u, trials=2, seed=seed)
    assert rep.sign_agrees
    if min(abs(rep.min_eig_primal), abs(rep.min_eig_dual)) > 1e-6:
        assert np.sign(rep.min_eig_primal) == np.sign(rep.min_eig_dual)
