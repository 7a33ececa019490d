# core/hduality.py
from __future__ import annotations

import os
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import ParameterError
from .hmatrix import HMatrix, anti_transpose, iterates_from_residuals, named_hmatrix
from .models import DualityReport, ProofWeights, QuadForm
from .numerics import min_eigen_sym, probe_quadratic

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
PSD_TOL = 1e-9
DUALITY_DIM = 3       # dimensão dos g aleatórios em verify_duality

Form = Callable[[np.ndarray], float]


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[hduality] {msg}")


# -----------------------------------------------------------------------------
# Pesos
# -----------------------------------------------------------------------------
def make_weights(w: List[float], tau: float, kind: str = "primal") -> ProofWeights:
    try:
        return ProofWeights(kind=kind, w=[float(x) for x in w], tau=float(tau))
    except ValueError as e:
        raise ParameterError(str(e)) from None


def dualize_weights(u: ProofWeights) -> ProofWeights:
    """v_j = 1/u_{N−j}; aplicada duas vezes devolve u."""
    w = [1.0 / x for x in reversed(u.w)]
    kind = "dual" if u.kind == "primal" else "primal"
    return ProofWeights(kind=kind, w=w, tau=u.tau)


def named_weights(kind: str, N: int) -> ProofWeights:
    """OHM: u_j = j(j+1)/N; Dual-OHM: v_j = N/((N−j)(N−j+1)); τ = N em ambos."""
    key = kind.replace("-", "").replace("_", "").lower()
    if N < 2:
        raise ParameterError(f"N deve ser >= 2, recebeu {N}")
    js = range(1, N)
    if key == "ohm":
        return ProofWeights(kind="primal", w=[j * (j + 1) / N for j in js], tau=float(N))
    if key == "dualohm":
        return ProofWeights(kind="dual", w=[N / ((N - j) * (N - j + 1)) for j in js], tau=float(N))
    raise ParameterError(f"pesos nomeados desconhecidos: '{kind}'")


def _check_sizes(H: HMatrix, w: ProofWeights) -> int:
    if H.convention != "fixed_point":
        raise ParameterError("formas quadráticas exigem H de ponto fixo")
    if H.n != w.N - 1:
        raise ParameterError(f"H ({H.n}x{H.n}) incompatível com {len(w.w)} pesos")
    return w.N


def _as_columns(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return g[:, None] if g.ndim == 1 else g


# -----------------------------------------------------------------------------
# Formas S e T (expressões de definição)
# -----------------------------------------------------------------------------
def primal_expression(H: HMatrix, u: ProofWeights) -> Form:
    """S(g) = U_N − τ‖g_N‖² − ⟨g_N, x_N − y_0⟩, com x dado pela dinâmica de H."""
    N = _check_sizes(H, u)

    def S(g) -> float:
        g = _as_columns(g)
        _, x = iterates_from_residuals(H, g)
        gN, xN = g[N - 1], x[N - 1]
        val = -u.tau * float(gN @ gN) - float(gN @ xN)
        for k in range(1, N):
            val -= u.w[k - 1] * float((g[k] - g[k - 1]) @ (x[k] - x[k - 1]))
        return val

    return S


def dual_expression(HA: HMatrix, v: ProofWeights) -> Form:
    """T(g) = −V_0 − τ‖g_N‖² − ⟨g_N, x_N − y_0⟩, com x dado pela dinâmica de HA."""
    N = _check_sizes(HA, v)

    def T(g) -> float:
        g = _as_columns(g)
        _, x = iterates_from_residuals(HA, g)
        gN, xN = g[N - 1], x[N - 1]
        val = -v.tau * float(gN @ gN) - float(gN @ xN)
        for k in range(1, N):
            val -= v.w[k - 1] * float((gN - g[k - 1]) @ (xN - x[k - 1]))
        return val

    return T


def s_form(H: HMatrix, u: ProofWeights) -> QuadForm:
    q = primal_expression(H, u)
    return QuadForm(S=probe_quadratic(q, u.N))


def t_form(HA: HMatrix, v: ProofWeights) -> QuadForm:
    q = dual_expression(HA, v)
    return QuadForm(S=probe_quadratic(q, v.N))


# -----------------------------------------------------------------------------
# Bijeção F
# -----------------------------------------------------------------------------
def f_map(u: ProofWeights, g) -> np.ndarray:
    """F(g)_k = u_{N−k}(g_{N−k+1} − g_{N−k}) + g_N (k < N), F(g)_N = g_N."""
    G = np.asarray(g, dtype=float)
    N = u.N
    if G.shape[0] != N:
        raise ParameterError(f"esperado {N} vetores, recebeu {G.shape[0]}")
    out = np.empty_like(G)
    for k in range(1, N):
        out[k - 1] = u.w[N - k - 1] * (G[N - k] - G[N - k - 1]) + G[N - 1]
    out[N - 1] = G[N - 1]
    return out


def f_inverse(u: ProofWeights, gp) -> np.ndarray:
    """g_m = g'_N + Σ_{k=1}^{N−m} (1/u_{N−k})(g'_N − g'_k)."""
    G = np.asarray(gp, dtype=float)
    N = u.N
    if G.shape[0] != N:
        raise ParameterError(f"esperado {N} vetores, recebeu {G.shape[0]}")
    out = np.empty_like(G)
    acc = np.zeros_like(G[N - 1])
    out[N - 1] = G[N - 1]
    for m in range(N - 1, 0, -1):
        k = N - m
        acc = acc + (G[N - 1] - G[k - 1]) / u.w[N - k - 1]
        out[m - 1] = G[N - 1] + acc
    return out


def f_matrix(u: ProofWeights) -> np.ndarray:
    """Matriz N×N de F (ação em g com entradas escalares)."""
    return f_map(u, np.eye(u.N))


# -----------------------------------------------------------------------------
# Certificados
# -----------------------------------------------------------------------------
def psd_margin(Q: QuadForm) -> float:
    return min_eigen_sym(Q.S)


def is_psd(Q: QuadForm, tol: float = PSD_TOL) -> bool:
    scale = 1.0 + float(np.linalg.norm(Q.S, 2))
    return bool(psd_margin(Q) >= -tol * scale)


def verify_duality(H: HMatrix, u: ProofWeights, tau: Optional[float] = None,
                   trials: int = 16, seed: int = 0) -> DualityReport:
    """max |S(g) − T(F(g))| sobre g aleatórios, mais os espectros mínimos de S e T."""
    if trials < 1:
        raise ParameterError(f"trials deve ser >= 1, recebeu {trials}")
    if u.kind != "primal":
        raise ParameterError("verify_duality espera pesos primais u")
    if tau is not None:
        u = ProofWeights(kind="primal", w=u.w, tau=float(tau))
    N = _check_sizes(H, u)
    HA = anti_transpose(H)
    v = dualize_weights(u)
    S = primal_expression(H, u)
    T = dual_expression(HA, v)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        g = rng.standard_normal((N, DUALITY_DIM))
        gap = abs(S(g) - T(f_map(u, g))) / (1.0 + float(np.sum(g * g)))
        worst = max(worst, gap)
    Sq = QuadForm(S=probe_quadratic(S, N))
    Tq = QuadForm(S=probe_quadratic(T, N))
    rep = DualityReport(N=N, discrepancy=worst,
                        min_eig_primal=psd_margin(Sq), min_eig_dual=psd_margin(Tq),
                        psd_primal=is_psd(Sq), psd_dual=is_psd(Tq))
    _vprint(f"N={N} |S−T∘F|={worst:.2e} eig=({rep.min_eig_primal:.3e}, {rep.min_eig_dual:.3e})")
    return rep


def named_certificate(kind: str, N: int) -> Tuple[QuadForm, bool]:
    """OHM → s_form(H_OHM, u); DualOHM → t_form(H_DualOHM, v). Devolve (forma, psd)."""
    w = named_weights(kind, N)
    H = named_hmatrix(kind, N)
    Q = s_form(H, w) if w.kind == "primal" else t_form(H, w)
    return Q, is_psd(Q)
