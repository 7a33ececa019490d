# core/minimax.py
from __future__ import annotations

import os
from typing import List, Optional

import numpy as np

from .errors import ParameterError
from .models import LyapunovSeries, Trace
from .operators import Problem, as_monotone

VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
MONO_TOL = 1e-9
METHODS = ("eg", "feg", "dual-feg")

_ALIASES = {"eg": "eg", "feg": "feg", "dualfeg": "dual-feg", "dual-feg": "dual-feg", "dual_feg": "dual-feg"}


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[minimax] {msg}")


def canonical(kind: str) -> str:
    key = kind.replace(" ", "").lower()
    if key not in _ALIASES:
        raise ParameterError(f"método minimax desconhecido: '{kind}'")
    return _ALIASES[key]


def default_alpha(P: Problem) -> float:
    L = getattr(P, "lipschitz", None)
    if not L:
        raise ParameterError("problema sem constante de Lipschitz: informe alpha")
    return 1.0 / float(L)


def run(kind: str, P: Problem, x0, alpha: Optional[float] = None, N: int = 1,
        keep_half: bool = True) -> Trace:
    """EG, FEG ou Dual-FEG por N passos (2 avaliações de gradiente por passo)."""
    method = canonical(kind)
    A = as_monotone(P)
    if alpha is None:
        alpha = default_alpha(P)
    if not alpha > 0.0:
        raise ParameterError(f"alpha deve ser > 0, recebeu {alpha}")
    if N < 0:
        raise ParameterError(f"N deve ser >= 0, recebeu {N}")
    x = np.array(x0, dtype=float).reshape(-1)
    if x.shape[0] != A.dim:
        raise ParameterError(f"dimensão de x0 ({x.shape[0]}) != dim do problema ({A.dim})")

    xs: List[np.ndarray] = [x]
    halves: List[np.ndarray] = []
    zs: List[np.ndarray] = [np.zeros_like(x)]
    g = A(x)
    gnorm = [float(g @ g)]
    evals = 0
    for k in range(N):
        xk = xs[k]
        gk = g
        evals += 1
        if method == "eg":
            xh = xk - alpha * gk
            gh = A(xh)
            xn = xk - alpha * gh
        elif method == "feg":
            anchor = (xs[0] - xk) / (k + 1)
            xh = xk + anchor - (k / (k + 1)) * alpha * gk
            gh = A(xh)
            xn = xk + anchor - alpha * gh
        else:
            c = (N - k - 1) / (N - k)
            zk = zs[k]
            xh = xk - alpha * zk - alpha * gk
            gh = A(xh)
            xn = xh - c * alpha * (gh - gk)
            zs.append(c * zk - gh / (N - k))
        evals += 1
        if keep_half:
            halves.append(xh)
        xs.append(xn)
        # A(x_{k+1}) é a avaliação do próximo passo (ou a métrica terminal)
        g = A(xn)
        gnorm.append(float(g @ g))
    flags = {"metric_evals": 1}
    L = getattr(P, "lipschitz", None)
    if L and method in ("feg", "dual-feg") and alpha * L > 1.0 + 1e-12:
        flags["step_violation"] = True
        _vprint(f"{method}: alpha*L = {alpha * L:.4g} > 1, sem garantia")
    return Trace(
        method=method, convention="gradient", iterates=np.array(xs),
        half_iterates=np.array(halves) if keep_half and halves else None,
        aux=np.array(zs) if method == "dual-feg" else None,
        metrics={"grad_norm_sq": gnorm}, evals=evals, horizon=N if method == "dual-feg" else None,
        alpha=float(alpha), flags=flags,
    )


def bound_series(dist0_sq: float, alpha: float, N: int) -> List[Optional[float]]:
    """4‖x0−x⋆‖²/(α²k²) para k=1..N (k=0 sem cota)."""
    return [None] + [4.0 * dist0_sq / (alpha * alpha * k * k) for k in range(1, N + 1)]


def dual_feg_lyapunov(P: Problem, trace: Trace, alpha: Optional[float] = None) -> LyapunovSeries:
    if trace.method != "dual-feg":
        raise ParameterError(f"esperado trace dual-feg, recebeu '{trace.method}'")
    if trace.half_iterates is None or trace.aux is None:
        raise ParameterError("trace dual-feg sem meio-passos ou z_k")
    A = as_monotone(P)
    alpha = float(trace.alpha if alpha is None else alpha)
    N = len(trace.iterates) - 1
    if N < 1:
        return LyapunovSeries(kind="V_dual_feg", values=[])
    xs, xh, zs = trace.iterates, trace.half_iterates, trace.aux
    grads = [A(x) for x in xs]
    gh = [A(x) for x in xh]
    gN, xN = grads[N], xs[N]
    V = []
    for k in range(N):
        w = zs[k] + gN
        V.append(-alpha * float(w @ w) + (2.0 / (N - k)) * float(w @ (xs[k] - xN)))
    MI, LI = [], []
    for k in range(N - 1):
        MI.append(float((gN - gh[k]) @ (xN - xh[k])))
        d = xh[k] - xs[k]
        dg = gh[k] - grads[k]
        LI.append(float(d @ d) - alpha * alpha * float(dg @ dg))
    V_arr = np.array(V)
    predicted = [2.0 / ((N - k) * (N - k - 1)) * MI[k] + LI[k] / (alpha * (N - k) ** 2)
                 for k in range(N - 1)]
    scale = 1.0 + float(np.max(np.abs(V_arr)))
    err = float(np.max(np.abs((V_arr[:-1] - V_arr[1:]) - np.array(predicted)), initial=0.0)) if N > 1 else 0.0
    viol = int(np.sum(np.diff(V_arr) > MONO_TOL * scale)) if N > 1 else 0
    return LyapunovSeries(kind="V_dual_feg", values=V, monotone=viol == 0, violations=viol,
                          max_identity_error=err / scale,
                          extras={"MI": MI, "LI": LI, "expected_difference": predicted})


def terminal_match_linear(P: Problem, x0, alpha: Optional[float] = None, N: int = 1) -> float:
    """‖x_N(FEG) − x_N(Dual-FEG)‖ / (1+‖x0‖), só para operadores lineares."""
    if not as_monotone(P).is_linear:
        raise ParameterError("terminal_match_linear exige operador linear")
    return terminal_gap(P, x0, alpha, N)


def terminal_gap(P: Problem, x0, alpha: Optional[float] = None, N: int = 1) -> float:
    a = run("feg", P, x0, alpha, N, keep_half=False).terminal
    b = run("dual-feg", P, x0, alpha, N, keep_half=False).terminal
    return float(np.linalg.norm(a - b)) / (1.0 + float(np.linalg.norm(np.asarray(x0, dtype=float))))
