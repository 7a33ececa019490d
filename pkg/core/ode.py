# core/ode.py
from __future__ import annotations

import os
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ParameterError
from .models import OdeTrajectory
from .numerics import as_matrix, expm, solve_linear
from .operators import MonotoneMap, Problem, as_monotone, yosida

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
MIN_STEPS = 10
TAIL_FRACTION = 1e-6
MONITOR_TOL = 1e-7
COND_MAX = 1e12
YOSIDA_DELTAS = (1e-1, 1e-2, 1e-3)

Rhs = Callable[[float, np.ndarray], np.ndarray]


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[ode] {msg}")


def _check(A: MonotoneMap, X0, T: float, steps: int) -> np.ndarray:
    if not T > 0.0:
        raise ParameterError(f"T deve ser > 0, recebeu {T}")
    if steps < MIN_STEPS:
        raise ParameterError(f"steps deve ser >= {MIN_STEPS}, recebeu {steps}")
    x = np.array(X0, dtype=float).reshape(-1)
    if x.shape[0] != A.dim:
        raise ParameterError(f"dimensão de X0 ({x.shape[0]}) != dim do operador ({A.dim})")
    return x


def _rk4(f: Rhs, times: np.ndarray, w0: np.ndarray) -> np.ndarray:
    out = np.empty((len(times), w0.shape[0]))
    out[0] = w0
    w = w0
    for i in range(len(times) - 1):
        t, h = times[i], times[i + 1] - times[i]
        k1 = f(t, w)
        k2 = f(t + 0.5 * h, w + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, w + 0.5 * h * k2)
        k4 = f(t + h, w + h * k3)
        w = w + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = w
    return out


# -----------------------------------------------------------------------------
# Anchor
# -----------------------------------------------------------------------------
def integrate_anchor(P: Problem, X0, T: float, steps: int) -> OdeTrajectory:
    """Ẋ = −A(X) + (X0 − X)/t, integrada em W = tX (Ẇ = X0 − t·A(W/t))."""
    A = as_monotone(P)
    x0 = _check(A, X0, T, steps)

    def f(t: float, w: np.ndarray) -> np.ndarray:
        if t == 0.0:
            return x0.copy()
        return x0 - t * A(w / t)

    times = np.linspace(0.0, float(T), steps + 1)
    W = _rk4(f, times, np.zeros_like(x0))
    X = np.empty_like(W)
    X[0] = x0
    X[1:] = W[1:] / times[1:, None]
    Xdot = np.empty_like(X)
    Xdot[0] = -0.5 * A(x0)
    gsq = [float(A(x0) @ A(x0))]
    for i in range(1, len(times)):
        g = A(X[i])
        Xdot[i] = -g + (x0 - X[i]) / times[i]
        gsq.append(float(g @ g))
    return OdeTrajectory(model="anchor", T=float(T), times=times, X=X, Xdot=Xdot,
                         monitors={"grad_norm_sq": gsq}, flags={"steps": steps})


def anchor_closed_form(Amat, X0, t: float) -> np.ndarray:
    """X(t) = (1/t)·A⁻¹(I − e^{−tA})X0 para A linear invertível."""
    M = as_matrix(Amat)
    if not t > 0.0:
        raise ParameterError(f"t deve ser > 0, recebeu {t}")
    if np.linalg.cond(M) > COND_MAX:
        raise ParameterError("matriz singular (ou mal condicionada) na forma fechada")
    x0 = np.asarray(X0, dtype=float)
    rhs = x0 - expm(M, -t) @ x0
    return solve_linear(M, rhs) / t


# -----------------------------------------------------------------------------
# Dual-Anchor
# -----------------------------------------------------------------------------
def tail_delta(T: float, steps: int) -> float:
    return max(T * TAIL_FRACTION, T / steps)


def _integrate_dual(A: MonotoneMap, x0: np.ndarray, T: float, steps: int, model: str) -> OdeTrajectory:
    d = x0.shape[0]
    delta = tail_delta(T, steps)

    def f(t: float, s: np.ndarray) -> np.ndarray:
        x, z = s[:d], s[d:]
        r = z + A(x)
        return np.concatenate([-r, -r / (T - t)])

    times = np.linspace(0.0, T - delta, steps + 1)
    S = _rk4(f, times, np.concatenate([x0, np.zeros(d)]))
    X, Z = S[:, :d], S[:, d:]
    grads = np.array([A(x) for x in X])
    Xdot = -(Z + grads)
    g0 = float(np.linalg.norm(grads[0]))
    traj = OdeTrajectory(model=model, T=float(T), times=times, X=X, Xdot=Xdot, Z=Z, delta=delta,
                         tail_slack=delta * delta * g0 / (2.0 * T),
                         monitors={"grad_norm_sq": [float(g @ g) for g in grads]},
                         flags={"steps": steps})
    return monitors(traj, A)


def integrate_dual_anchor(P: Problem, X0, T: float, steps: int) -> OdeTrajectory:
    """Ẋ = −Z − A(X), Ż = −(Z + A(X))/(T − t), X(0)=X0, Z(0)=0, em [0, T−δ]."""
    A = as_monotone(P)
    x0 = _check(A, X0, T, steps)
    return _integrate_dual(A, x0, float(T), steps, "dual-anchor")


def integrate_dual_anchor_yosida(P: Problem, delta: float, X0, T: float, steps: int) -> OdeTrajectory:
    A = as_monotone(P)
    x0 = _check(A, X0, T, steps)
    Ad = yosida(A, delta)
    traj = _integrate_dual(Ad, x0, float(T), steps, "dual-anchor-yosida")
    traj.flags["yosida_delta"] = float(delta)
    return traj


def yosida_sequence(P: Problem, X0, T: float, steps: int,
                    deltas: Sequence[float] = YOSIDA_DELTAS) -> Dict[str, object]:
    """Pontos terminais para δ decrescente; Cauchy quando as distâncias sucessivas encolhem."""
    if len(deltas) < 3:
        raise ParameterError("exige pelo menos 3 valores de delta")
    terms = [integrate_dual_anchor_yosida(P, dl, X0, T, steps).terminal for dl in deltas]
    dists = [float(np.linalg.norm(terms[i + 1] - terms[i])) for i in range(len(terms) - 1)]
    ratios = [dists[i + 1] / dists[i] if dists[i] > 0.0 else 0.0 for i in range(len(dists) - 1)]
    return {"deltas": [float(x) for x in deltas], "terminals": [t.tolist() for t in terms],
            "distances": dists, "ratios": ratios,
            "cauchy": all(r < 1.0 for r in ratios)}


# -----------------------------------------------------------------------------
# Monitores
# -----------------------------------------------------------------------------
def _increases(vals: np.ndarray) -> int:
    scale = 1.0 + float(np.max(np.abs(vals), initial=0.0))
    return int(np.sum(np.diff(vals) > MONITOR_TOL * scale))


def monitors(traj: OdeTrajectory, A: Problem) -> OdeTrajectory:
    """V(t), Ψ(t) e lim V na trajetória dual (in-place)."""
    if traj.Z is None or traj.model == "anchor":
        raise ParameterError(f"monitores exigem trajetória dual, recebeu '{traj.model}'")
    op = as_monotone(A)
    T = traj.T
    xT = traj.X[-1]
    gT = op(xT)
    rem = T - traj.times
    w = traj.Z + gT
    V = -np.sum(w * w, axis=1) + (2.0 / rem) * np.sum(w * (traj.X - xT), axis=1)
    Psi = np.sum(traj.Xdot * traj.Xdot, axis=1) / rem ** 2
    traj.monitors["V"] = V.tolist()
    traj.monitors["Psi"] = Psi.tolist()
    traj.flags["V_violations"] = _increases(V)
    traj.flags["Psi_violations"] = _increases(Psi)
    traj.flags["V_terminal"] = float(V[-1])
    return traj


def rate_check(traj: OdeTrajectory, A: Problem, x_star, rtol: float = 1e-8) -> Dict[str, float]:
    """‖A X(T)‖² contra 4‖X0−X⋆‖²/T², com folga de truncamento na cauda."""
    op = as_monotone(A)
    g = op(traj.terminal)
    value = float(g @ g)
    dist = float(np.linalg.norm(traj.X[0] - np.asarray(x_star, dtype=float)))
    bound = 4.0 * dist * dist / (traj.T * traj.T)
    L = op.lipschitz if op.lipschitz is not None else 0.0
    root_slack = L * traj.tail_slack + rtol * (1.0 + dist)
    slack = (2.0 * np.sqrt(bound) + root_slack) * root_slack
    return {"value": value, "bound": bound, "slack": float(slack), "ok": bool(value <= bound + slack)}


def strong_decay_check(traj: OdeTrajectory, A: Problem, mu: float, rtol: float = 1e-7) -> Dict[str, float]:
    """‖Ẋ(t)‖ ≤ ((T−t)/T)·e^{−μt}‖A X0‖ ao longo da trajetória dual."""
    if traj.model == "anchor":
        raise ParameterError("checagem de decaimento vale só para a trajetória dual")
    if not mu > 0.0:
        raise ParameterError(f"mu deve ser > 0, recebeu {mu}")
    g0 = float(np.linalg.norm(as_monotone(A)(traj.X[0])))
    t = traj.times
    bound = ((traj.T - t) / traj.T) * np.exp(-mu * t) * g0
    speed = np.linalg.norm(traj.Xdot, axis=1)
    excess = speed - bound - rtol * (1.0 + g0)
    return {"max_excess": float(np.max(excess)), "ok": bool(np.all(excess <= 0.0))}


def terminal_agreement(P: Problem, X0, T: float, steps: int) -> float:
    """‖X_anchor(T) − X_dual(T)‖ (informativo, sem garantia em tempo contínuo)."""
    a = integrate_anchor(P, X0, T, steps).terminal
    b = integrate_dual_anchor(P, X0, T, steps).terminal
    gap = float(np.linalg.norm(a - b))
    _vprint(f"anchor vs dual-anchor em T={T}: {gap:.3e}")
    return gap


# -----------------------------------------------------------------------------
# H-kernel
# -----------------------------------------------------------------------------
def anchor_kernel(t: float, s: float) -> float:
    """Parte suave de H(t,s) da Anchor ODE: −s/t²."""
    return -s / (t * t)


def dual_anchor_kernel(T: float, t: float, s: float) -> float:
    """Parte suave do kernel da Dual-Anchor ODE: −(T−t)/(T−s)²."""
    return -(T - t) / ((T - s) ** 2)


def hkernel_check(T: float, samples: int = 100, seed: int = 0) -> float:
    """max |H(T−s, T−t) − H_dual(t,s)| sobre pares 0 ≤ s < t < T."""
    if samples < 10:
        raise ParameterError(f"samples deve ser >= 10, recebeu {samples}")
    if not T > 0.0:
        raise ParameterError(f"T deve ser > 0, recebeu {T}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        a, b = sorted(rng.uniform(0.0, T, size=2))
        if a == b:
            continue
        s, t = float(a), float(b)
        worst = max(worst, abs(anchor_kernel(T - s, T - t) - dual_anchor_kernel(T, t, s)))
    return worst


def kernel_consistency(traj: OdeTrajectory, A: Problem, upto: float = 0.5) -> float:
    """Compara Z(t) integrado com −(T−t)∫₀ᵗ A(X(s))/(T−s)² ds em t ≤ upto·T (trapézios)."""
    if traj.Z is None:
        raise ParameterError("exige trajetória dual")
    op = as_monotone(A)
    rem = traj.T - traj.times
    G = np.array([op(x) for x in traj.X]) / (rem ** 2)[:, None]
    integral = cumulative_trapezoid(G, traj.times, axis=0, initial=0.0)
    Zk = -rem[:, None] * integral
    keep = traj.times <= upto * traj.T
    scale = 1.0 + float(np.max(np.abs(traj.Z[keep]), initial=0.0))
    return float(np.max(np.abs(Zk[keep] - traj.Z[keep]), initial=0.0)) / scale


# -----------------------------------------------------------------------------
# Formas de 2ª ordem (A linear)
# -----------------------------------------------------------------------------
def _linear(A: Problem) -> MonotoneMap:
    op = as_monotone(A)
    if not op.is_linear:
        raise ParameterError("formas de 2ª ordem verificadas só para A linear")
    return op


def anchor_second_order_residual(A: Problem, X0, X, t: float) -> float:
    """‖Ẍ + (2/t)Ẋ + (1/t)A(X) + (d/dt)A(X)‖ com Ẋ, Ẍ derivados da forma de 1ª ordem."""
    op = _linear(A)
    if not t > 0.0:
        raise ParameterError(f"t deve ser > 0, recebeu {t}")
    x0, x = np.asarray(X0, dtype=float), np.asarray(X, dtype=float)
    M = op.matrix
    gx = op(x)
    xd = -gx + (x0 - x) / t
    xdd = -M @ xd - (x0 - x) / (t * t) - xd / t
    res = xdd + (2.0 / t) * xd + gx / t + M @ xd
    return float(np.linalg.norm(res))


def dual_anchor_second_order_residual(A: Problem, X, Z, t: float, T: float) -> float:
    """‖Ẍ + Ẋ/(T−t) + (d/dt)A(X)‖ a partir do estado (X, Z) da forma de 1ª ordem."""
    op = _linear(A)
    if not 0.0 <= t < T:
        raise ParameterError(f"t deve estar em [0, T), recebeu {t}")
    x, z = np.asarray(X, dtype=float), np.asarray(Z, dtype=float)
    M = op.matrix
    r = z + op(x)
    xd = -r
    zd = -r / (T - t)
    xdd = -zd - M @ xd
    res = xdd + xd / (T - t) + M @ xd
    return float(np.linalg.norm(res))


def lower_bound_witness(Amat, X0, t: float, mu: float) -> Tuple[float, float]:
    """(‖A X_anchor(t)‖, (1/t)(1−e^{−μt})‖X0‖) para A linear μ-fortemente monótona."""
    M = as_matrix(Amat)
    x = anchor_closed_form(M, X0, t)
    lhs = float(np.linalg.norm(M @ x))
    rhs = (1.0 - np.exp(-mu * t)) * float(np.linalg.norm(np.asarray(X0, dtype=float))) / t
    return lhs, rhs


def to_rows(traj: OdeTrajectory) -> List[List[float]]:
    """Linhas (t, coords…, monitores…) na ordem de `csv_header`."""
    names = sorted(traj.monitors)
    rows = []
    for i, t in enumerate(traj.times):
        rows.append([float(t)] + [float(v) for v in traj.X[i]] + [float(traj.monitors[n][i]) for n in names])
    return rows


def csv_header(traj: OdeTrajectory) -> List[str]:
    return ["t"] + [f"x{i}" for i in range(traj.X.shape[1])] + sorted(traj.monitors)
