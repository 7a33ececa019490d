# core/hmatrix.py
from __future__ import annotations

import csv
import json
import os
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import model_validator

from .errors import ParameterError, ParseError
from .models import Trace, _BaseModel
from .operators import NonexpansiveMap, Problem, as_monotone

VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"

FP_KINDS = {"ohm": "OHM", "dualohm": "DualOHM", "dual-ohm": "DualOHM", "dual_ohm": "DualOHM"}
GRAD_KINDS = {"feg": "FEG", "dualfeg": "DualFEG", "dual-feg": "DualFEG", "dual_feg": "DualFEG"}


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[hmatrix] {msg}")


# -----------------------------------------------------------------------------
# Tipo
# -----------------------------------------------------------------------------
class HMatrix(_BaseModel):
    """Matriz triangular inferior de passos.

    convention="fixed_point": y_{k+1} = y_k − Σ_j h_{k+1,j+1}(y_j − T y_j).
    convention="gradient": posições 0..2N (ímpar = meio-passo), entradas em
    unidades de αL: x_{p+1} = x_p − (1/L) Σ_c h[p,c]·A x_c.
    """
    entries: np.ndarray
    convention: Literal["fixed_point", "gradient"] = "fixed_point"
    alpha_L: Optional[float] = None
    label: str = "custom"
    exact: Optional[List[List[str]]] = None

    @model_validator(mode="after")
    def _check(self) -> "HMatrix":
        E = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if E.ndim != 2 or E.shape[0] != E.shape[1] or E.shape[0] < 1:
            raise ValueError(f"H deve ser quadrada com n >= 1, shape {E.shape}")
        if np.any(np.triu(E, 1) != 0.0):
            raise ValueError("parte estritamente superior de H deve ser nula")
        self.entries = E
        return self

    @property
    def n(self) -> int:
        return int(self.entries.shape[0])


def hmatrix(entries, label: str = "custom") -> HMatrix:
    try:
        return HMatrix(entries=np.asarray(entries, dtype=float), label=label)
    except ValueError as e:
        raise ParameterError(str(e)) from None


def _exact_strings(F: List[List[Fraction]]) -> List[List[str]]:
    return [[str(v) for v in row] for row in F]


def _from_fractions(F: List[List[Fraction]], scale: float = 1.0) -> np.ndarray:
    return np.array([[float(v) * scale for v in row] for row in F], dtype=float)


# -----------------------------------------------------------------------------
# H-dual
# -----------------------------------------------------------------------------
def anti_transpose(H: HMatrix) -> HMatrix:
    """(H^A)[k,j] = H[n−1−j, n−1−k]."""
    E = np.ascontiguousarray(H.entries[::-1, ::-1].T)
    exact = None
    if H.exact is not None:
        n = H.n
        exact = [[H.exact[n - 1 - j][n - 1 - k] for j in range(n)] for k in range(n)]
    label = H.label[:-2] if H.label.endswith("^A") else f"{H.label}^A"
    return HMatrix(entries=E, convention=H.convention, alpha_L=H.alpha_L, label=label, exact=exact)


# -----------------------------------------------------------------------------
# Matrizes nomeadas
# -----------------------------------------------------------------------------
def _canon(kind: str, table: Dict[str, str]) -> str:
    key = kind.replace(" ", "").lower()
    if key not in table:
        raise ParameterError(f"tipo desconhecido: '{kind}'")
    return table[key]


def named_fractions(kind: str, N: int) -> List[List[Fraction]]:
    kind = _canon(kind, FP_KINDS)
    if N < 2:
        raise ParameterError(f"N deve ser >= 2, recebeu {N}")
    n = N - 1
    F = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        for j in range(1, k + 1):
            if kind == "OHM":
                v = Fraction(k, k + 1) if j == k else Fraction(-j, k * (k + 1))
            else:
                v = Fraction(N - k, N - k + 1) if j == k else Fraction(-(N - k), (N - j) * (N - j + 1))
            F[k - 1][j - 1] = v
    return F


def named_hmatrix(kind: str, N: int) -> HMatrix:
    F = named_fractions(kind, N)
    return HMatrix(entries=_from_fractions(F), label=f"{_canon(kind, FP_KINDS)}({N})",
                   exact=_exact_strings(F))


def gradient_fractions(kind: str, N: int) -> List[List[Fraction]]:
    kind = _canon(kind, GRAD_KINDS)
    if N < 1:
        raise ParameterError(f"N deve ser >= 1, recebeu {N}")
    F = [[Fraction(0)] * (2 * N) for _ in range(2 * N)]
    for k in range(N):
        if kind == "FEG":
            F[2 * k][2 * k] = Fraction(k, k + 1)
            for j in range(k):
                F[2 * k][2 * j + 1] = Fraction(-(j + 1), k * (k + 1))
            F[2 * k + 1][2 * k + 1] = Fraction(1)
            F[2 * k + 1][2 * k] = Fraction(-k, k + 1)
        else:
            F[2 * k][2 * k] = Fraction(1)
            for j in range(k):
                F[2 * k][2 * j + 1] = Fraction(-(N - k), (N - j - 1) * (N - j))
            F[2 * k + 1][2 * k + 1] = Fraction(N - k - 1, N - k)
            F[2 * k + 1][2 * k] = Fraction(-(N - k - 1), N - k)
    return F


def named_gradient_hmatrix(kind: str, N: int, alpha_L: float = 1.0) -> HMatrix:
    if not (0.0 < alpha_L <= 1.0):
        raise ParameterError(f"alphaL deve estar em (0,1], recebeu {alpha_L}")
    F = gradient_fractions(kind, N)
    return HMatrix(entries=_from_fractions(F, float(alpha_L)), convention="gradient",
                   alpha_L=float(alpha_L), label=f"{_canon(kind, GRAD_KINDS)}({N})",
                   exact=_exact_strings(F) if alpha_L == 1.0 else None)


# -----------------------------------------------------------------------------
# Execução
# -----------------------------------------------------------------------------
def run_fp_hmatrix(H: HMatrix, T: NonexpansiveMap, y0, convention: str = "residual") -> Trace:
    """y_0..y_n com n = H.n; cada passo consome uma nova avaliação de T."""
    if H.convention != "fixed_point":
        raise ParameterError("run_fp_hmatrix exige H de ponto fixo")
    if convention not in ("residual", "resolvent"):
        raise ParameterError(f"convenção desconhecida: '{convention}'")
    y = np.array(y0, dtype=float).reshape(-1)
    if y.shape[0] != T.dim:
        raise ParameterError(f"dimensão de y0 ({y.shape[0]}) != dim de T ({T.dim})")
    n = H.n
    E = H.entries
    ys = [y]
    res: List[np.ndarray] = []
    for k in range(n):
        res.append(ys[k] - T(ys[k]))
        step = np.zeros_like(y)
        for j in range(k + 1):
            if E[k, j] != 0.0:
                step += E[k, j] * res[j]
        ys.append(ys[k] - step)
    res.append(ys[n] - T(ys[n]))
    return Trace(
        method=f"hmatrix[{H.label}]", convention=convention, iterates=np.array(ys),
        metrics={"residual_sq": [float(r @ r) for r in res]},
        evals=n, horizon=n + 1, gamma=T.gamma, flags={"metric_evals": 1},
    )


def run_grad_hmatrix(H: HMatrix, P: Problem, x0, L: float) -> Trace:
    if H.convention != "gradient" or H.n % 2:
        raise ParameterError("run_grad_hmatrix exige H de gradiente com tamanho 2N")
    if not L > 0.0:
        raise ParameterError(f"L deve ser > 0, recebeu {L}")
    A = as_monotone(P)
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != A.dim:
        raise ParameterError(f"dimensão de x0 ({x.shape[0]}) != dim do problema ({A.dim})")
    E = H.entries
    pts = [x]
    grads: List[np.ndarray] = []
    for p in range(H.n):
        grads.append(A(pts[p]))
        step = np.zeros_like(x)
        for c in range(p + 1):
            if E[p, c] != 0.0:
                step += E[p, c] * grads[c]
        pts.append(pts[p] - step / L)
    grads.append(A(pts[-1]))
    P_arr = np.array(pts)
    alpha = (H.alpha_L / L) if H.alpha_L is not None else None
    return Trace(
        method=f"hmatrix[{H.label}]", convention="gradient",
        iterates=P_arr[0::2], half_iterates=P_arr[1::2],
        metrics={"grad_norm_sq": [float(g @ g) for g in grads[0::2]]},
        evals=H.n, horizon=H.n // 2, alpha=alpha, flags={"metric_evals": 1},
    )


def iterates_from_residuals(H: HMatrix, g: np.ndarray, y0=None) -> Tuple[np.ndarray, np.ndarray]:
    """Dinâmica livre: dado g_1..g_N (g_k = Ãx_k), devolve (y_0..y_{N−1}, x_1..x_N).

    y_{k+1} = y_k − Σ_j 2h_{k+1,j+1} g_{j+1};  x_k = y_{k−1} − g_k.
    """
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    N = H.n + 1
    if g.shape[0] != N:
        raise ParameterError(f"esperado {N} vetores g, recebeu {g.shape[0]}")
    y = np.zeros((N, g.shape[1]))
    if y0 is not None:
        y[0] = np.asarray(y0, dtype=float)
    E = H.entries
    for k in range(N - 1):
        y[k + 1] = y[k] - 2.0 * (E[k, : k + 1] @ g[: k + 1])
    x = y - g
    return y, x


# -----------------------------------------------------------------------------
# Export / import
# -----------------------------------------------------------------------------
def to_csv(H: HMatrix, path: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        for k in range(H.n):
            w.writerow([repr(float(v)) for v in H.entries[k, : k + 1]])
    return path


def from_csv(path: str, label: Optional[str] = None) -> HMatrix:
    with open(path, "r", encoding="utf-8") as f:
        rows = [r for r in csv.reader(f) if r]
    n = len(rows)
    if n == 0:
        raise ParseError(f"CSV vazio: {path}")
    E = np.zeros((n, n))
    for k, r in enumerate(rows):
        if len(r) != k + 1:
            raise ParseError(f"linha {k} deve ter {k + 1} valores, tem {len(r)}")
        try:
            E[k, : k + 1] = [float(v) for v in r]
        except ValueError as e:
            raise ParseError(f"valor inválido na linha {k}: {e}") from None
    return HMatrix(entries=E, label=label or os.path.basename(path))


def to_dump(H: HMatrix) -> Dict[str, object]:
    rows = [[float(v) for v in H.entries[k, : k + 1]] for k in range(H.n)]
    out: Dict[str, object] = {
        "label": H.label,
        "n": H.n,
        "convention": H.convention,
        "alpha_L": H.alpha_L,
        "lower": rows,
    }
    if H.exact is not None:
        out["exact"] = [H.exact[k][: k + 1] for k in range(H.n)]
    return out


def dumps(H: HMatrix) -> str:
    return json.dumps(to_dump(H), ensure_ascii=False, indent=2)
