# core/family.py
from __future__ import annotations

import os
from typing import List, Optional, Tuple

import numpy as np

from .errors import ParameterError, SingularSystemError, SynthesisError
from .hmatrix import HMatrix, iterates_from_residuals
from .models import FamilyCertificate, PVector
from .numerics import lu_factor, lu_solve, min_eigen_sym, probe_quadratic

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
N_MAX = 200
P1_TOL = 1e-12
SUM_TOL = 1e-10
CERT_TOL = 1e-9
PROBE_TRIALS = 8


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[family] {msg}")


# -----------------------------------------------------------------------------
# Vetores p
# -----------------------------------------------------------------------------
def named_pvector(kind: str, N: int, gamma: Optional[float] = None) -> PVector:
    """OHM: p_k = k/N; Dual-OHM: p_k = 1/(N−k+1); Interpolate(γ): γ·OHM + (1−γ)·Dual."""
    key = kind.replace("-", "").replace("_", "").lower()
    if N < 2:
        raise ParameterError(f"N deve ser >= 2, recebeu {N}")
    ks = np.arange(1, N)
    ohm = ks / N
    dual = 1.0 / (N - ks + 1)
    if key == "ohm":
        return PVector(N=N, p=ohm.tolist(), label="OHM")
    if key == "dualohm":
        return PVector(N=N, p=dual.tolist(), label="DualOHM")
    if key in ("interpolate", "interp"):
        if N < 3:
            raise ParameterError("Interpolate exige N >= 3")
        if gamma is None or not (0.0 < gamma < 1.0):
            raise ParameterError(f"gamma deve estar em (0,1), recebeu {gamma}")
        p = gamma * ohm + (1.0 - gamma) * dual
        p[0] = 1.0 / N
        return PVector(N=N, p=p.tolist(), label=f"Interpolate({gamma:g})")
    raise ParameterError(f"p-vetor desconhecido: '{kind}'")


def make_pvector(p: List[float]) -> PVector:
    """PVector a partir de p_1..p_{N−1} (N = len(p)+1)."""
    N = len(p) + 1
    pv = PVector(N=N, p=[float(v) for v in p])
    _check_p1(pv)
    return pv


def _check_p1(p: PVector) -> None:
    if abs(p.p[0] - 1.0 / p.N) > P1_TOL:
        raise ParameterError(f"p_1 deve ser 1/N = {1.0 / p.N:.12g}, recebeu {p.p[0]:.12g}")


def interior_margin(p: PVector) -> float:
    """Menor folga das desigualdades estritas do interior (> 0 ⇔ interior)."""
    N, P = p.N, p.p
    slacks = []
    for k in range(2, N):
        slacks.append(P[k - 1] - 1.0 / (N - k + 1))
    for k in range(1, N - 1):
        slacks.append(P[k - 1] - ((N - k) / (N - k - 1)) * P[k] + 1.0 / (N - k - 1))
    return float(min(slacks)) if slacks else float("inf")


def _pk(p: PVector, k: int) -> float:
    """p_k 1-indexado, com p_N := 1."""
    return 1.0 if k == p.N else p.p[k - 1]


# -----------------------------------------------------------------------------
# λ / q
# -----------------------------------------------------------------------------
def lambdas_and_q(p: PVector) -> FamilyCertificate:
    _check_p1(p)
    N = p.N
    lam_sub = []
    for k in range(1, N - 1):
        pk1 = _pk(p, k + 1)
        lam_sub.append((N / (N - k - 1)) * pk1 * ((N - k) * pk1 - 1.0))
    lam_last = []
    for k in range(1, N - 1):
        lam_last.append(N / ((N - k) * (N - k - 1)) - (N / (N - k - 1)) * _pk(p, k + 1)
                        + (N / (N - k)) * _pk(p, k))
    lam_last.append(N * _pk(p, N - 1))
    q = [1.0 - (N - k) * _pk(p, k + 1) + (N - k + 1) * _pk(p, k) for k in range(1, N)]
    sum_err = abs(sum(lam_last) - (N - 1))
    if sum_err > SUM_TOL * N:
        _vprint(f"identidade Σλ_N,i = N−1 violada: {sum_err:.3e}")
    return FamilyCertificate(N=N, lambda_sub=lam_sub, lambda_last=lam_last, q=q,
                             lambda_sum_error=sum_err)


class _Lam:
    """Acesso 1-indexado a λ_{k+1,k}, λ_{N,k}, q_k (ausentes = 0)."""

    def __init__(self, cert: FamilyCertificate):
        self.N = cert.N
        self._sub = cert.lambda_sub
        self._last = cert.lambda_last
        self._q = cert.q

    def sub(self, k: int) -> float:          # λ_{k+1,k}
        return self._sub[k - 1] if 1 <= k <= self.N - 2 else 0.0

    def last(self, k: int) -> float:         # λ_{N,k}
        return self._last[k - 1] if 1 <= k <= self.N - 1 else 0.0

    def q(self, k: int) -> float:
        return self._q[k - 1]


# -----------------------------------------------------------------------------
# Síntese
# -----------------------------------------------------------------------------
def synthesize(p: PVector) -> HMatrix:
    """H da família ótima: diagonais por p, colunas por sistemas lineares (k = N−2..1)."""
    _check_p1(p)
    N = p.N
    if N > N_MAX:
        raise ParameterError(f"N limitado a {N_MAX} na síntese, recebeu {N}")
    lam = _Lam(lambdas_and_q(p))
    n = N - 1
    H = np.zeros((n, n))
    h = lambda i, j: H[i - 1, j - 1]  # noqa: E731
    for k in range(1, N - 1):
        H[k - 1, k - 1] = _pk(p, k) / _pk(p, k + 1)
    H[n - 1, n - 1] = _pk(p, N - 1)

    for k in range(N - 2, 0, -1):
        rows = list(range(k + 1, N))
        m = len(rows)
        B = np.zeros((m, m))
        b = np.zeros(m)
        for a, l in enumerate(rows):
            if l <= N - 2:
                B[a, a] = lam.sub(l) + lam.last(l)
                B[a, a + 1:] = lam.last(l)
            else:
                B[a, a] = lam.last(N - 1)
            if l >= k + 2:
                B[a, a - 1] = -lam.sub(l - 1)
            b[a] = -0.5 * lam.last(k) * lam.q(l)
            if l == k + 1:
                b[a] -= lam.sub(k) * (1.0 - h(k, k))
        try:
            sol = lu_solve(lu_factor(B), b)
        except SingularSystemError as e:
            raise SynthesisError(f"sistema singular na coluna {k}: {e}", column=k) from None
        H[k:, k - 1] = sol
    _vprint(f"síntese N={N} '{p.label}' ok")
    return HMatrix(entries=H, label=f"Family[{p.label}]({N})")


def n3_closed_form(p2: float) -> np.ndarray:
    """Forma explícita N=3: h11 = 1/(3p2), h22 = p2, h21 = 1 − h11 − h22."""
    h11 = 1.0 / (3.0 * p2)
    return np.array([[h11, 0.0], [1.0 - h11 - p2, p2]])


# -----------------------------------------------------------------------------
# Certificação
# -----------------------------------------------------------------------------
def s_coefficients(H: HMatrix, p: PVector) -> List[Tuple[Tuple[int, int], float]]:
    """Coeficientes s_{ℓ,k} da forma quadrática vetorial (devem ser todos nulos)."""
    N = p.N
    if H.n != N - 1:
        raise ParameterError(f"H ({H.n}x{H.n}) incompatível com N={N}")
    lam = _Lam(lambdas_and_q(p))
    E = H.entries
    h = lambda i, j: float(E[i - 1, j - 1])  # noqa: E731
    colsum = lambda i0, j: sum(h(i, j) for i in range(i0, N))  # Σ_{i=i0}^{N−1} h_{i,j}  # noqa: E731
    S: List[Tuple[Tuple[int, int], float]] = []

    S.append(((N, N), N - 1 - sum(lam.last(k) for k in range(1, N))))
    hl = h(N - 1, N - 1)
    S.append(((N - 1, N - 1), -lam.sub(N - 2) + lam.last(N - 1) * (2.0 * hl - 1.0)))
    S.append(((N, N - 1), -2.0 * hl * (1.0 + sum(lam.last(k) for k in range(1, N - 1)))
              - 2.0 * lam.last(N - 1) * (hl - 1.0)))
    for k in range(1, N - 1):
        S.append(((k, k), lam.sub(k) * (2.0 * h(k, k) - 1.0) - (lam.sub(k - 1) if k > 1 else 0.0)
                  + lam.last(k) * (2.0 * colsum(k, k) - 1.0)))
    for k in range(1, N - 2):
        S.append(((k + 1, k), 2.0 * lam.sub(k) * (1.0 - h(k, k)) + 2.0 * lam.sub(k + 1) * h(k + 1, k)
                  + 2.0 * lam.last(k) * colsum(k + 1, k + 1) + 2.0 * lam.last(k + 1) * colsum(k + 1, k)))
        for l in range(k + 2, N - 1):
            S.append(((l, k), -2.0 * lam.sub(l - 1) * h(l - 1, k) + 2.0 * lam.sub(l) * h(l, k)
                      + 2.0 * lam.last(k) * colsum(l, l) + 2.0 * lam.last(l) * colsum(l, k)))
        S.append(((N - 1, k), 2.0 * lam.last(k) * hl - 2.0 * lam.sub(N - 2) * h(N - 2, k)
                  + 2.0 * lam.last(N - 1) * h(N - 1, k)))
    if N >= 3:
        S.append(((N - 1, N - 2), 2.0 * lam.sub(N - 2) * (1.0 - h(N - 2, N - 2))
                  + 2.0 * lam.last(N - 1) * h(N - 1, N - 2) + 2.0 * lam.last(N - 2) * hl))
    cum = np.cumsum([lam.last(j) for j in range(1, N)])  # Σ_{j≤ℓ} λ_{N,j}
    for k in range(1, N - 1):
        tail = sum((1.0 + cum[l - 1]) * 2.0 * h(l, k) for l in range(k, N))
        S.append(((N, k), 2.0 * lam.last(k) - tail))
    return S


def identity_form(H: HMatrix, p: PVector):
    """Q(g) = ⟨g_N, x_N−y_0⟩ + N‖g_N‖² + Σλ_{k+1,k}⟨g_{k+1}−g_k, x_{k+1}−x_k⟩ + Σλ_{N,k}⟨g_N−g_k, x_N−x_k⟩."""
    N = p.N
    lam = _Lam(lambdas_and_q(p))

    def Q(g: np.ndarray) -> float:
        g = np.asarray(g, dtype=float)
        if g.ndim == 1:
            g = g[:, None]
        _, x = iterates_from_residuals(H, g)   # y_0 = 0
        gN, xN = g[N - 1], x[N - 1]
        val = float(gN @ xN) + N * float(gN @ gN)
        for k in range(1, N - 1):
            val += lam.sub(k) * float((g[k] - g[k - 1]) @ (x[k] - x[k - 1]))
        for k in range(1, N):
            val += lam.last(k) * float((gN - g[k - 1]) @ (xN - x[k - 1]))
        return val

    return Q


def certify(H: HMatrix, p: PVector, seed: int = 0, trials: int = PROBE_TRIALS) -> FamilyCertificate:
    cert = lambdas_and_q(p)
    coeffs = s_coefficients(H, p)
    cert.max_residual = float(max(abs(v) for _, v in coeffs))
    Q = identity_form(H, p)
    S_probe = probe_quadratic(Q, p.N)
    rng = np.random.default_rng(seed)
    rand = [abs(Q(g)) / (1.0 + float(np.sum(g * g)))
            for g in (rng.standard_normal((p.N, 3)) for _ in range(trials))]
    cert.probe_residual = float(max(np.max(np.abs(S_probe)), max(rand, default=0.0)))
    cert.psd_margin = min_eigen_sym(S_probe)
    cert.threshold = CERT_TOL
    return cert


def lambdas_positive(cert: FamilyCertificate, tol: float = -1e-12) -> bool:
    return all(v >= tol for v in cert.lambda_sub + cert.lambda_last)


def column_sum_identity_gap(H: HMatrix, p: PVector) -> float:
    """2(h_{N−1,N−2} + h_{N−2,N−2}) − (1 − 2p_{N−1} + 3p_{N−2}); nulo para membros da família."""
    N = p.N
    if N < 3:
        raise ParameterError("exige N >= 3")
    E = H.entries
    lhs = 2.0 * (E[N - 2, N - 3] + E[N - 3, N - 3])
    rhs = 1.0 - 2.0 * _pk(p, N - 1) + 3.0 * _pk(p, N - 2)
    return float(lhs - rhs)


def pvector_of(H: HMatrix) -> PVector:
    """p_k = Π_{ℓ=k}^{N−1} h_{ℓ,ℓ}."""
    d = np.diag(H.entries)
    p = [float(np.prod(d[k:])) for k in range(len(d))]
    return PVector(N=H.n + 1, p=p, label=f"p[{H.label}]")
