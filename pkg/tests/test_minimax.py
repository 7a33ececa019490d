import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from core import minimax as mm
from core.errors import ParameterError
from core.operators import make_problem


@pytest.mark.parametrize("kind,x1", [("feg", [1.0, 1.0]), ("eg", [0.0, 1.0]), ("dual-feg", [1.0, 1.0])])
def test_single_step_on_bilinear(kind, x1):
    P = make_problem("bilinear_uv")
    tr = mm.run(kind, P, [1.0, 0.0], alpha=1.0, N=1)
    assert_allclose(tr.terminal, x1, atol=1e-15)
    assert tr.evals == 2


def test_step_counts_gradient_pairs():
    P = make_problem("bilinear_uv")
    tr = mm.run("feg", P, [1.0, 0.0], N=7)
    assert tr.evals == 14
    assert tr.iterates.shape == (8, 2)
    assert tr.half_iterates.shape == (7, 2)
    assert tr.flags["metric_evals"] == 1


def test_zero_steps():
    P = make_problem("bilinear_uv")
    tr = mm.run("dual-feg", P, [1.0, 2.0], N=0)
    assert tr.evals == 0
    assert_allclose(tr.terminal, [1.0, 2.0])
    assert tr.half_iterates is None


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 20))
def test_feg_gradient_bound(seed, d, N):
    P = make_problem("random_linear_monotone", d=d, seed=seed, shifted=True)
    x0 = np.random.default_rng(seed + 3).standard_normal(d)
    alpha = 1.0 / P.lipschitz
    d2 = float((x0 - P.known_zero) @ (x0 - P.known_zero))
    bound = mm.bound_series(d2, alpha, N)
    feg = mm.run("feg", P, x0, alpha, N).metrics["grad_norm_sq"]
    for k in range(1, N + 1):
        assert feg[k] <= bound[k] * (1.0 + 1e-9) + 1e-12
    dual = mm.run("dual-feg", P, x0, alpha, N).metrics["grad_norm_sq"]
    assert dual[-1] <= bound[-1] * (1.0 + 1e-9) + 1e-12


def test_terminal_match_on_bilinear():
    P = make_problem("bilinear_uv")
    assert mm.terminal_match_linear(P, [1.0, 0.0], alpha=0.5, N=20) <= 1e-8


def test_terminal_match_requires_linear():
    with pytest.raises(ParameterError):
        mm.terminal_match_linear(make_problem("u_squared_v"), [1.0, 1.0], alpha=0.1, N=3)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(2, 15))
def test_dual_feg_lyapunov_nonincreasing(seed, d, N):
    P = make_problem("random_linear_monotone", d=d, seed=seed, shifted=True)
    x0 = np.random.default_rng(seed + 5).standard_normal(d)
    tr = mm.run("dual-feg", P, x0, 1.0 / P.lipschitz, N)
    V = mm.dual_feg_lyapunov(P, tr)
    assert V.monotone
    assert V.max_identity_error <= 1e-9
    assert min(V.extras["MI"]) >= -1e-10
    assert min(V.extras["LI"]) >= -1e-10


def test_dual_feg_lyapunov_rejects_other_traces():
    P = make_problem("bilinear_uv")
    with pytest.raises(ParameterError):
        mm.dual_feg_lyapunov(P, mm.run("feg", P, [1.0, 0.0], N=3))


def test_step_violation_flag():
    P = make_problem("bilinear_uv")
    assert mm.run("feg", P, [1.0, 0.0], alpha=2.0, N=2).flags.get("step_violation") is True
    assert "step_violation" not in mm.run("feg", P, [1.0, 0.0], alpha=1.0, N=2).flags


def test_alpha_required_without_lipschitz():
    P = make_problem("u_squared_v")
    with pytest.raises(ParameterError):
        mm.run("eg", P, [1.0, 1.0], N=3)
    tr = mm.run("eg", P, [1.0, 1.0], alpha=0.05, N=3)
    assert tr.evals == 6


def test_invalid_arguments():
    P = make_problem("bilinear_uv")
    with pytest.raises(ParameterError):
        mm.run("feg", P, [1.0, 0.0], alpha=-1.0, N=2)
    with pytest.raises(ParameterError):
        mm.run("feg", P, [1.0, 0.0, 0.0], N=2)
    with pytest.raises(ParameterError):
        mm.run("feg", P, [1.0, 0.0], N=-1)


def test_canonical_names():
    assert mm.canonical("DualFEG") == "dual-feg"
    assert mm.canonical("dual_feg") == "dual-feg"
    assert mm.canonical("EG") == "eg"
    with pytest.raises(ParameterError):
        mm.canonical("ogda")


@pytest.mark.parametrize("n,N", [(5, 200), (10, 300)])
def test_terminal_match_on_ouyang_xu(n, N):
    P = make_problem("ouyang_xu", n=n)
    assert mm.terminal_match_linear(P, np.zeros(2 * n), alpha=1.0, N=N) <= 1e-8


@pytest.mark.parametrize("N", [500, 800])
def test_methods_differ_on_u_squared_v(N):
    P = make_problem("u_squared_v")
    assert mm.terminal_gap(P, [-1.0, 1.0], alpha=0.05, N=N) > 1e-6
