# core/numerics.py
from __future__ import annotations

from typing import Callable, Tuple

import numpy as np
from scipy import linalg as sla

from .errors import ContractViolation, ParameterError, SingularSystemError

# -----------------------------------------------------------------------------
# Tolerâncias
# -----------------------------------------------------------------------------
REL_TOL = 1e-10
SINGULAR_TOL = 1e-14
SYM_TOL = 1e-12


# -----------------------------------------------------------------------------
# Vetores / matrizes
# -----------------------------------------------------------------------------
def as_vector(x, name: str = "x") -> np.ndarray:
    v = np.atleast_1d(np.asarray(x, dtype=float))
    if v.ndim != 1:
        raise ParameterError(f"{name}: esperado vetor 1-D, recebido shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractViolation(f"{name}: entradas não finitas")
    return v


def as_matrix(M, name: str = "M") -> np.ndarray:
    A = np.atleast_2d(np.asarray(M, dtype=float))
    if A.ndim != 2:
        raise ParameterError(f"{name}: esperado matriz 2-D, recebido shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ContractViolation(f"{name}: entradas não finitas")
    return A


def _require_square(A: np.ndarray, name: str) -> None:
    if A.shape[0] != A.shape[1]:
        raise ParameterError(f"{name}: matriz não quadrada {A.shape}")


def sym_part(M) -> np.ndarray:
    A = as_matrix(M)
    return 0.5 * (A + A.T)


# -----------------------------------------------------------------------------
# Sistemas lineares
# -----------------------------------------------------------------------------
def solve_lower_triangular(L, b) -> np.ndarray:
    """Substituição direta para L·x = b com L triangular inferior."""
    Lm = as_matrix(L, "L")
    _require_square(Lm, "L")
    bv = as_vector(b, "b")
    if bv.shape[0] != Lm.shape[0]:
        raise ParameterError(f"dimensões incompatíveis: L {Lm.shape}, b {bv.shape}")
    if np.any(np.triu(Lm, 1) != 0.0):
        raise ContractViolation("L não é triangular inferior")
    scale = float(np.max(np.abs(Lm))) if Lm.size else 0.0
    diag = np.abs(np.diag(Lm))
    bad = np.nonzero(diag < SINGULAR_TOL * max(scale, np.finfo(float).tiny))[0]
    if bad.size:
        raise SingularSystemError(f"diagonal nula/quase nula na linha {int(bad[0])}")
    return sla.solve_triangular(Lm, bv, lower=True, check_finite=False)


def lu_factor(M) -> Tuple[np.ndarray, np.ndarray]:
    """LU com pivotamento parcial; rejeita pivôs quase nulos."""
    A = as_matrix(M)
    _require_square(A, "M")
    lu, piv = sla.lu_factor(A, check_finite=False)
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    pivots = np.abs(np.diag(lu))
    bad = np.nonzero(pivots <= SINGULAR_TOL * max(scale, np.finfo(float).tiny))[0]
    if bad.size:
        raise SingularSystemError(f"pivô nulo/quase nulo na posição {int(bad[0])}")
    return lu, piv


def lu_solve(factors: Tuple[np.ndarray, np.ndarray], b) -> np.ndarray:
    return sla.lu_solve(factors, np.asarray(b, dtype=float), check_finite=False)


def solve_linear(M, b) -> np.ndarray:
    return lu_solve(lu_factor(M), b)


# -----------------------------------------------------------------------------
# Espectro
# -----------------------------------------------------------------------------
def min_eigen_sym(M) -> float:
    A = as_matrix(M)
    _require_square(A, "M")
    norm = float(np.max(np.abs(A))) if A.size else 0.0
    if np.max(np.abs(A - A.T), initial=0.0) > SYM_TOL * max(1.0, norm):
        raise ContractViolation("matriz não simétrica além da tolerância")
    S = 0.5 * (A + A.T)
    return float(sla.eigvalsh(S, subset_by_index=[0, 0], check_finite=False)[0])


def power_norm(M, iters: int = 100, tol: float = REL_TOL, seed: int = 0) -> float:
    """Estimativa de ‖M‖₂ por iteração de potência em MᵀM."""
    A = as_matrix(M)
    if not np.any(A):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(np.sqrt(nw))
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.linalg.norm(A @ v))


def expm(M, t: float = 1.0) -> np.ndarray:
    """e^{tM} (Padé com scaling-and-squaring)."""
    A = as_matrix(M)
    _require_square(A, "M")
    return sla.expm(float(t) * A)


# -----------------------------------------------------------------------------
# Formas quadráticas por sondagem
# -----------------------------------------------------------------------------
def probe_quadratic(q: Callable[[np.ndarray], float], n: int) -> np.ndarray:
    """Recupera S simétrica com q(g) = gᵀSg avaliando q em e_i e e_i+e_j."""
    eye = np.eye(n)
    diag = np.array([q(eye[i]) for i in range(n)])
    S = np.diag(diag)
    for i in range(n):
        for j in range(i):
            s = 0.5 * (q(eye[i] + eye[j]) - diag[i] - diag[j])
            S[i, j] = S[j, i] = s
    return S
