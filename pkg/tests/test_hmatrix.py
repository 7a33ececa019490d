import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from core import minimax as mm
from core.errors import ParameterError, ParseError
from core.hmatrix import (
    anti_transpose, from_csv, hmatrix, iterates_from_residuals, named_gradient_hmatrix,
    named_hmatrix, run_fp_hmatrix, run_grad_hmatrix, to_csv, to_dump,
)
from core.operators import NonexpansiveMap, make_problem


def minus_identity() -> NonexpansiveMap:
    return NonexpansiveMap(dim=1, name="-I", func=lambda y: -y, matrix=-np.eye(1), known_fix=np.zeros(1))


def test_ohm_entries_n3():
    H = named_hmatrix("OHM", 3)
    assert_allclose(H.entries, [[0.5, 0.0], [-1.0 / 6.0, 2.0 / 3.0]], atol=1e-15)
    assert H.exact == [["1/2", "0"], ["-1/6", "2/3"]]


def test_dual_ohm_entries_n3():
    assert_allclose(named_hmatrix("DualOHM", 3).entries, [[2.0 / 3.0, 0.0], [-1.0 / 6.0, 0.5]], atol=1e-15)


@pytest.mark.parametrize("N", [2, 3, 7, 30])
def test_ohm_anti_transpose_is_dual_ohm(N):
    HA = anti_transpose(named_hmatrix("OHM", N))
    assert np.max(np.abs(HA.entries - named_hmatrix("DualOHM", N).entries)) <= 1e-14


@pytest.mark.parametrize("N", [1, 2, 5, 30])
def test_feg_anti_transpose_is_dual_feg(N):
    HA = anti_transpose(named_gradient_hmatrix("FEG", N))
    assert np.max(np.abs(HA.entries - named_gradient_hmatrix("DualFEG", N).entries)) <= 1e-14


def test_gradient_hmatrices_n1():
    assert_array_equal(named_gradient_hmatrix("FEG", 1).entries, [[0.0, 0.0], [0.0, 1.0]])
    assert_array_equal(named_gradient_hmatrix("DualFEG", 1).entries, [[1.0, 0.0], [0.0, 0.0]])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_anti_transpose_is_involution(seed, n):
    E = np.tril(np.random.default_rng(seed).standard_normal((n, n)))
    H = hmatrix(E)
    assert_array_equal(anti_transpose(anti_transpose(H)).entries, H.entries)


def test_hmatrix_rejects_upper_part():
    with pytest.raises(ParameterError):
        hmatrix([[1.0, 1.0], [0.0, 1.0]])


def test_gradient_alpha_range():
    with pytest.raises(ParameterError):
        named_gradient_hmatrix("FEG", 3, 1.5)


def test_ohm_hmatrix_on_minus_identity():
    tr = run_fp_hmatrix(named_hmatrix("OHM", 3), minus_identity(), np.ones(1))
    assert_allclose(tr.iterates[:, 0], [1.0, 0.0, 1.0 / 3.0], atol=1e-15)
    assert tr.evals == 2
    assert tr.flags["metric_evals"] == 1


def test_iterates_from_residuals_shapes():
    H = named_hmatrix("OHM", 4)
    g = np.random.default_rng(0).standard_normal((4, 2))
    y, x = iterates_from_residuals(H, g)
    assert y.shape == x.shape == (4, 2)
    assert_allclose(x, y - g)
    assert_allclose(y[0], 0.0)
    with pytest.raises(ParameterError):
        iterates_from_residuals(H, g[:3])


@pytest.mark.parametrize("kind,H", [("feg", "FEG"), ("dual-feg", "DualFEG")])
def test_grad_hmatrix_matches_direct_recursion(kind, H):
    P = make_problem("random_linear_monotone", d=4, seed=11, shifted=True)
    x0 = np.ones(4)
    L = float(P.lipschitz)
    direct = mm.run(kind, P, x0, 1.0 / L, 6)
    via_h = run_grad_hmatrix(named_gradient_hmatrix(H, 6), P, x0, L)
    assert_allclose(via_h.iterates, direct.iterates, atol=1e-10)
    assert_allclose(via_h.half_iterates, direct.half_iterates, atol=1e-10)


def test_csv_round_trip(tmp_path):
    H = named_hmatrix("DualOHM", 6)
    path = to_csv(H, str(tmp_path / "H.csv"))
    assert_array_equal(from_csv(path).entries, H.entries)
    assert to_dump(H)["n"] == 5


def test_csv_rejects_ragged_rows(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1.0\n0.5,0.5,0.5\n", encoding="utf-8")
    with pytest.raises(ParseError):
        from_csv(str(bad))
