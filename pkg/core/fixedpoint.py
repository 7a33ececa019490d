# core/fixedpoint.py
from __future__ import annotations

import os
from fractions import Fraction
from typing import List, Tuple

import numpy as np

from .errors import ConsistencyError, ParameterError
from .hmatrix import HMatrix, named_fractions, named_hmatrix, run_fp_hmatrix, _exact_strings, _from_fractions
from .models import LyapunovSeries, Trace
from .operators import MonotoneMap, NonexpansiveMap, resolvent

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
FORM_TOL = 1e-10          # divergência entre formas (relativa a 1+‖y0‖)
IDENTITY_TOL = 1e-9       # identidades de Lyapunov
MONO_TOL = 1e-9

METHODS = ("ohm", "dual-ohm", "appm", "dual-ohm-prox", "composed")


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[fixedpoint] {msg}")


def _start(T: NonexpansiveMap, y0) -> np.ndarray:
    y = np.array(y0, dtype=float).reshape(-1)
    if y.shape[0] != T.dim:
        raise ParameterError(f"dimensão de y0 ({y.shape[0]}) != dim de T ({T.dim})")
    return y


def _residuals(ys: np.ndarray, Tys: List[np.ndarray]) -> List[float]:
    return [float((y - ty) @ (y - ty)) for y, ty in zip(ys, Tys)]


def rate_bound(dist0_sq: float, k: int) -> float:
    """4‖y0−y⋆‖²/k² (k ≥ 1)."""
    return 4.0 * dist0_sq / float(k * k)


def max_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))


# -----------------------------------------------------------------------------
# OHM
# -----------------------------------------------------------------------------
def run_ohm(T: NonexpansiveMap, y0, N: int, form: str = "anchor") -> Trace:
    """y_{k+1} = ((k+1)/(k+2)) T y_k + y_0/(k+2), k = 0..N−1."""
    if N < 1:
        raise ParameterError(f"N deve ser >= 1, recebeu {N}")
    y = _start(T, y0)
    if form == "hmatrix":
        tr = run_fp_hmatrix(named_hmatrix("OHM", N + 1), T, y)
        tr.method = "ohm"
        tr.flags["form"] = form
        tr.flags["lyapunov"] = "U_ohm"
        return tr
    if form not in ("anchor", "momentum"):
        raise ParameterError(f"forma desconhecida para OHM: '{form}'")
    ys = [y]
    Tys: List[np.ndarray] = []
    for k in range(N):
        Tys.append(T(ys[k]))
        if form == "anchor":
            ys.append(((k + 1) / (k + 2)) * Tys[k] + ys[0] / (k + 2))
        else:
            prev = Tys[k - 1] if k > 0 else ys[0]
            ys.append(ys[k] - (ys[k] - Tys[k]) / (k + 2) + (k / (k + 2)) * (Tys[k] - prev))
    Tys.append(T(ys[N]))
    arr = np.array(ys)
    return Trace(method="ohm", iterates=arr, metrics={"residual_sq": _residuals(arr, Tys)},
                 evals=N, gamma=T.gamma, flags={"form": form, "metric_evals": 1, "lyapunov": "U_ohm"})


# -----------------------------------------------------------------------------
# Dual-OHM
# -----------------------------------------------------------------------------
def _dual_ohm_z(T: NonexpansiveMap, y: np.ndarray, N: int) -> Tuple[np.ndarray, List[np.ndarray]]:
    ys = [y]
    z = np.zeros_like(y)
    Tys: List[np.ndarray] = []
    for k in range(N - 1):
        Tys.append(T(ys[k]))
        z = ((N - k - 1) / (N - k)) * z - (ys[k] - Tys[k]) / (N - k)
        ys.append(Tys[k] - z)
    return np.array(ys), Tys


def _dual_ohm_momentum(T: NonexpansiveMap, y: np.ndarray, N: int) -> Tuple[np.ndarray, List[np.ndarray]]:
    ys = [y]
    Tys: List[np.ndarray] = []
    for k in range(N - 1):
        Tys.append(T(ys[k]))
        prev = Tys[k - 1] if k > 0 else ys[0]
        ys.append(ys[k] + ((N - k - 1) / (N - k)) * (Tys[k] - prev))
    return np.array(ys), Tys


def _z_from_iterates(ys: np.ndarray, Tys: List[np.ndarray]) -> np.ndarray:
    """z_0 = 0, z_{k+1} = T y_k − y_{k+1}."""
    z = np.zeros_like(ys)
    for k in range(len(ys) - 1):
        z[k + 1] = Tys[k] - ys[k + 1]
    return z


def run_dual_ohm(T: NonexpansiveMap, y0, N: int, form: str = "z", check_forms: bool = True) -> Trace:
    """Dual-OHM com horizonte N: y_0..y_{N−1}, z_0..z_{N−1}."""
    if N < 1:
        raise ParameterError(f"N deve ser >= 1, recebeu {N}")
    y = _start(T, y0)
    if form == "hmatrix":
        if N < 2:
            raise ParameterError("forma H-matrix exige N >= 2")
        tr = run_fp_hmatrix(named_hmatrix("DualOHM", N), T, y)
        ys, Tys = tr.iterates, None
    elif form == "z":
        ys, Tys = _dual_ohm_z(T, y, N)
    elif form == "momentum":
        ys, Tys = _dual_ohm_momentum(T, y, N)
    else:
        raise ParameterError(f"forma desconhecida para Dual-OHM: '{form}'")

    flags = {"form": form, "metric_evals": 1, "lyapunov": "V_dual_ohm"}
    if check_forms and N >= 2:
        ref_form = "momentum" if form != "momentum" else "z"
        ref, _ = (_dual_ohm_momentum if ref_form == "momentum" else _dual_ohm_z)(T, y, N)
        gap = max_gap(ys, ref)
        flags["form_gap"] = gap
        if gap > FORM_TOL * (1.0 + float(np.linalg.norm(y))):
            raise ConsistencyError(f"Dual-OHM: formas '{form}' e '{ref_form}' divergiram ({gap:.3e})")
        _vprint(f"dual-ohm N={N} form={form} gap={gap:.2e}")

    if form == "hmatrix":
        return Trace(method="dual-ohm", iterates=tr.iterates, aux=None, metrics=tr.metrics,
                     evals=tr.evals, horizon=N, gamma=T.gamma, flags=flags)
    Tys.append(T(ys[-1]))
    return Trace(method="dual-ohm", iterates=ys, aux=_z_from_iterates(ys, Tys),
                 metrics={"residual_sq": _residuals(ys, Tys)},
                 evals=N - 1, horizon=N, gamma=T.gamma, flags=flags)


def dual_iterate(trace: Trace, k: int) -> np.ndarray:
    """Iterado k de um método dual; k > N−1 é erro (sem re-ancoragem)."""
    if trace.horizon is None:
        raise ParameterError(f"trace '{trace.method}' não tem horizonte")
    if not 0 <= k <= trace.horizon - 1:
        raise ParameterError(f"iterado {k} fora do horizonte N={trace.horizon}")
    return trace.iterates[k]


# -----------------------------------------------------------------------------
# Formas proximais
# -----------------------------------------------------------------------------
def run_proximal_form(kind: str, A: MonotoneMap, y0, N: int, gamma: float = 1.0) -> Trace:
    """APPM (≡ OHM) e forma proximal do Dual-OHM, via resolventes de A."""
    key = kind.replace("_", "-").lower()
    if N < 1:
        raise ParameterError(f"N deve ser >= 1, recebeu {N}")
    y = np.array(y0, dtype=float).reshape(-1)
    if y.shape[0] != A.dim:
        raise ParameterError(f"dimensão de y0 ({y.shape[0]}) != dim de A ({A.dim})")
    J = lambda v: resolvent(A, v, gamma)  # noqa: E731

    ys = [y]
    xs = [y]  # x_0 = y_0
    y_prev = y  # y_{−1}
    if key == "appm":
        for k in range(N):
            xs.append(J(ys[k]))
            c = k / (k + 2)
            nxt = xs[k + 1] + c * (xs[k + 1] - xs[k]) - c * (xs[k] - y_prev)
            y_prev = ys[k]
            ys.append(nxt)
        method, lyap, evals, horizon = "appm", "U_ohm", N, None
    elif key in ("dualohmprox", "dual-ohm-prox"):
        for k in range(N - 1):
            xs.append(J(ys[k]))
            c = (N - k - 1) / (N - k)
            nxt = (xs[k + 1] + c * (xs[k + 1] - xs[k]) - c * (xs[k] - y_prev)
                   - (xs[k + 1] - ys[k]) / (N - k))
            y_prev = ys[k]
            ys.append(nxt)
        method, lyap, evals, horizon = "dual-ohm-prox", "V_dual_ohm", N - 1, N
    else:
        raise ParameterError(f"forma proximal desconhecida: '{kind}'")
    xs.append(J(ys[-1]))
    Y = np.array(ys)
    X = np.array(xs[1:])
    res = [float(4.0 * (yk - xk) @ (yk - xk)) for yk, xk in zip(Y, X)]
    return Trace(method=method, convention="resolvent", iterates=Y, resolvents=X,
                 metrics={"residual_sq": res}, evals=evals, horizon=horizon, gamma=gamma,
                 flags={"form": "proximal", "metric_evals": 1, "lyapunov": lyap})


# -----------------------------------------------------------------------------
# Algoritmo composto (Dual-OHM(N′) seguido de OHM)
# -----------------------------------------------------------------------------
def _check_composed(N: int, Nprime: int) -> None:
    if not (2 <= Nprime <= N - 1):
        raise ParameterError(f"exige 2 <= Nprime <= N-1, recebeu N={N} Nprime={Nprime}")


def run_composed(T: NonexpansiveMap, y0, N: int, Nprime: int) -> Trace:
    _check_composed(N, Nprime)
    y = _start(T, y0)
    ys = [y]
    Tys: List[np.ndarray] = []
    for k in range(Nprime - 1):
        Tys.append(T(ys[k]))
        prev = Tys[k - 1] if k > 0 else ys[0]
        ys.append(ys[k] + ((Nprime - k - 1) / (Nprime - k)) * (Tys[k] - prev))
    for k in range(Nprime - 1, N - 1):
        Tys.append(T(ys[k]))
        ys.append(((k + 1) / (k + 2)) * Tys[k] + ys[0] / (k + 2))
    Tys.append(T(ys[-1]))
    arr = np.array(ys)
    return Trace(method="composed", iterates=arr, metrics={"residual_sq": _residuals(arr, Tys)},
                 evals=N - 1, horizon=N, gamma=T.gamma,
                 flags={"Nprime": Nprime, "metric_evals": 1})


def composed_fractions(N: int, Nprime: int) -> List[List[Fraction]]:
    _check_composed(N, Nprime)
    n = N - 1
    F = [[Fraction(0)] * n for _ in range(n)]
    head = named_fractions("DualOHM", Nprime)
    for k in range(Nprime - 1):
        F[k][: k + 1] = head[k][: k + 1]
    for k in range(Nprime - 1, n):
        for j in range(k + 1):
            col = sum((F[i][j] for i in range(j, k)), Fraction(0))
            F[k][j] = -col / (k + 2) + (Fraction(k + 1, k + 2) if j == k else 0)
    return F


def composed_hmatrix(N: int, Nprime: int) -> HMatrix:
    F = composed_fractions(N, Nprime)
    return HMatrix(entries=_from_fractions(F), label=f"Composed({N},{Nprime})",
                   exact=_exact_strings(F))


# -----------------------------------------------------------------------------
# Lyapunov
# -----------------------------------------------------------------------------
def lemma_check(g: np.ndarray, x: np.ndarray, y: np.ndarray, x_star: np.ndarray,
                rho: float, tol: float = 1e-9) -> bool:
    """Se ρ‖g‖² + ⟨g, x−y⟩ ≤ 0 então ‖g‖² ≤ ‖y−x⋆‖²/ρ² (True se consistente)."""
    scale = 1.0 + float((y - x_star) @ (y - x_star))
    premise = rho * float(g @ g) + float(g @ (x - y)) <= tol * scale
    if not premise:
        return True
    return float(g @ g) <= float((y - x_star) @ (y - x_star)) / rho ** 2 + tol * scale


def _resolvent_points(A: MonotoneMap, trace: Trace) -> np.ndarray:
    if trace.resolvents is not None and len(trace.resolvents) >= len(trace.iterates):
        return trace.resolvents[: len(trace.iterates)]
    return np.array([resolvent(A, yk, trace.gamma) for yk in trace.iterates])


def _count_increases(vals: np.ndarray, scale: float) -> int:
    if len(vals) < 2:
        return 0
    return int(np.sum(np.diff(vals) > MONO_TOL * scale))


def lyapunov_series(kind: str, A: MonotoneMap, trace: Trace) -> LyapunovSeries:
    expected = trace.flags.get("lyapunov")
    if expected != kind:
        raise ParameterError(f"série '{kind}' incompatível com trace '{trace.method}' ({expected})")
    ys = trace.iterates
    xs = _resolvent_points(A, trace)          # x_1..x_K
    gs = ys - xs                               # Ãx_k = y_{k−1} − x_k
    y0 = ys[0]
    x_star = A.known_zero

    if kind == "U_ohm":
        K = len(ys)
        U = [0.0]
        for k in range(1, K + 1):
            g, x = gs[k - 1], xs[k - 1]
            U.append(k * k * float(g @ g) + k * float(g @ (x - y0)))
        U_arr = np.array(U)
        exp_diff = [0.0] + [j * (j + 1) * float((xs[j] - xs[j - 1]) @ (gs[j] - gs[j - 1]))
                            for j in range(1, K)]
        scale = 1.0 + float(np.max(np.abs(U_arr)))
        err = float(np.max(np.abs((U_arr[:-1] - U_arr[1:]) - np.array(exp_diff)), initial=0.0))
        lemma = None
        if x_star is not None:
            lemma = all(lemma_check(gs[k - 1], xs[k - 1], y0, x_star, float(k)) for k in range(1, K + 1))
        viol = _count_increases(U_arr, scale)
        return LyapunovSeries(kind=kind, values=U, monotone=viol == 0, violations=viol,
                              max_identity_error=err / scale, lemma_ok=lemma,
                              extras={"expected_difference": exp_diff})

    if kind == "V_dual_ohm":
        N = trace.horizon
        if N is None or len(ys) != N:
            raise ParameterError("trace Dual-OHM sem horizonte consistente")
        Tys = 2.0 * xs - ys
        z = np.zeros_like(ys)
        for k in range(N - 1):
            z[k + 1] = Tys[k] - ys[k + 1]
        gN, xN, yN1 = gs[N - 1], xs[N - 1], ys[N - 1]
        V = []
        for k in range(N):
            w = z[k] + 2.0 * gN
            V.append(-((N - k - 1) / (N - k)) * float(w @ w) + (2.0 / (N - k)) * float(w @ (ys[k] - yN1)))
        V_arr = np.array(V)
        exp_diff = [4.0 / ((N - k) * (N - k - 1)) * float((xN - xs[k]) @ (gN - gs[k]))
                    for k in range(N - 1)]
        scale = 1.0 + float(np.max(np.abs(V_arr)))
        err = float(np.max(np.abs((V_arr[:-1] - V_arr[1:]) - np.array(exp_diff)), initial=0.0)) if N > 1 else 0.0
        lemma = None
        if x_star is not None:
            lemma = lemma_check(gN, xN, y0, x_star, float(N))
        viol = _count_increases(V_arr, scale)
        if err > IDENTITY_TOL * scale:
            _vprint(f"identidade de V_k violada: {err:.3e}")
        return LyapunovSeries(kind=kind, values=V, monotone=viol == 0, violations=viol,
                              max_identity_error=err / scale, lemma_ok=lemma,
                              extras={"expected_difference": exp_diff})

    raise ParameterError(f"série de Lyapunov desconhecida: '{kind}'")
