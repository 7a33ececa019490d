import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core import fixedpoint as fp
from core.errors import ParameterError
from core.family import (
    N_MAX, certify, column_sum_identity_gap, interior_margin, lambdas_and_q, lambdas_positive,
    make_pvector, n3_closed_form, named_pvector, pvector_of, s_coefficients, synthesize,
)
from core.hmatrix import hmatrix, named_hmatrix, run_fp_hmatrix
from core.operators import make_problem, nonexpansive_from_monotone


def test_named_pvectors():
    assert_allclose(named_pvector("OHM", 4).p, [0.25, 0.5, 0.75])
    assert_allclose(named_pvector("DualOHM", 4).p, [0.25, 1.0 / 3.0, 0.5])
    p = named_pvector("interpolate", 4, 0.5)
    assert_allclose(p.p, [0.25, (0.5 + 1.0 / 3.0) / 2.0, 0.5 * 0.75 + 0.25])


@pytest.mark.parametrize("args", [("interpolate", 2, 0.5), ("interpolate", 5, 1.0), ("interpolate", 5, None),
                                  ("ohm", 1, None), ("halpern", 4, None)])
def test_named_pvector_errors(args):
    with pytest.raises(ParameterError):
        named_pvector(*args)


def test_p1_is_pinned():
    with pytest.raises(ParameterError):
        make_pvector([0.3, 0.6])
    assert make_pvector([1.0 / 3.0, 0.6]).N == 3


def test_interior_margin():
    assert interior_margin(named_pvector("OHM", 6)) == pytest.approx(0.0, abs=1e-12)
    assert interior_margin(named_pvector("DualOHM", 6)) == pytest.approx(0.0, abs=1e-12)
    assert interior_margin(named_pvector("interpolate", 6, 0.3)) > 0.0


@pytest.mark.parametrize("p2", [0.55, 0.6, 0.65])
def test_n3_synthesis_matches_closed_form(p2):
    p = make_pvector([1.0 / 3.0, p2])
    H = synthesize(p)
    assert_allclose(H.entries, n3_closed_form(p2), atol=1e-12)
    assert H.entries[0, 0] * H.entries[1, 1] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert max(abs(v) for _, v in s_coefficients(H, p)) <= 1e-12
    assert abs(column_sum_identity_gap(H, p)) <= 1e-12


def test_n3_certificate():
    p = make_pvector([1.0 / 3.0, 0.6])
    cert = certify(synthesize(p), p)
    assert cert.passed
    assert lambdas_positive(cert)
    assert cert.psd_margin >= -1e-9


@pytest.mark.parametrize("N", [3, 4, 6, 10])
def test_lambda_identities(N):
    cert = lambdas_and_q(named_pvector("interpolate", N, 0.4))
    assert len(cert.lambda_sub) == N - 2
    assert len(cert.lambda_last) == N - 1
    assert len(cert.q) == N - 1
    assert sum(cert.lambda_last) == pytest.approx(N - 1, abs=1e-10)
    assert cert.lambda_sum_error <= 1e-10 * N
    assert lambdas_positive(cert)


@pytest.mark.parametrize("N,gamma", [(4, 0.5), (5, 0.2), (8, 0.8)])
def test_interior_member_is_certified(N, gamma):
    p = named_pvector("interpolate", N, gamma)
    H = synthesize(p)
    cert = certify(H, p)
    assert cert.passed
    assert_allclose(pvector_of(H).p, p.p, rtol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 10), st.floats(0.05, 0.95))
def test_family_member_terminal_rate(seed, N, gamma):
    H = synthesize(named_pvector("interpolate", N, gamma))
    A = make_problem("random_linear_monotone", d=3, seed=seed, shifted=True)
    y0 = np.random.default_rng(seed).standard_normal(3)
    tr = run_fp_hmatrix(H, nonexpansive_from_monotone(A, 1.0), y0)
    d2 = float((y0 - A.known_zero) @ (y0 - A.known_zero))
    assert tr.metrics["residual_sq"][-1] <= fp.rate_bound(d2, N) + 1e-9


def test_synthesis_size_limit():
    N = N_MAX + 1
    p = make_pvector([1.0 / N] + [0.5] * (N - 2))
    with pytest.raises(ParameterError):
        synthesize(p)


def test_s_coefficients_size_mismatch():
    p = named_pvector("OHM", 4)
    with pytest.raises(ParameterError):
        s_coefficients(synthesize(named_pvector("OHM", 5)), p)


@pytest.mark.parametrize("kind", ["OHM", "DualOHM"])
@pytest.mark.parametrize("N", [3, 5, 8])
def test_boundary_points_reproduce_named_matrices(kind, N):
    H = synthesize(named_pvector(kind, N))
    assert_allclose(H.entries, named_hmatrix(kind, N).entries, atol=1e-12)


def test_ohm_certificate_residual():
    p = named_pvector("OHM", 6)
    cert = certify(named_hmatrix("OHM", 6), p)
    assert cert.max_residual <= 1e-10
    assert cert.passed


@pytest.mark.parametrize("N", [3, 5])
def test_certificate_detects_tampered_entry(N):
    E = named_hmatrix("OHM", N).entries.copy()
    E[1, 0] += 0.01
    cert = certify(hmatrix(E), named_pvector("OHM", N))
    assert cert.max_residual > 1e-4
    assert not cert.passed


@pytest.mark.parametrize("N", [4, 6])
@pytest.mark.parametrize("kind,gamma_of", [("DualOHM", lambda t: t), ("OHM", lambda t: 1.0 - t)])
def test_interpolation_approaches_boundary(N, kind, gamma_of):
    target = named_hmatrix(kind, N).entries
    dists = []
    for offset in (0.5, 0.1, 0.01, 0.001):
        H = synthesize(named_pvector("interpolate", N, gamma_of(offset)))
        dists.append(float(np.max(np.abs(H.entries - target))))
    assert all(b < a for a, b in zip(dists, dists[1:]))
    # convergência de primeira ordem no deslocamento
    assert dists[-1] <= 0.15 * dists[-2]
