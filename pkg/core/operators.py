# core/operators.py
from __future__ import annotations

import os
from typing import Any, Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import Field

from . import cache as _cache
from .errors import ParameterError, UnsupportedOperatorError
from .models import _BaseModel
from .numerics import as_matrix, as_vector, lu_factor, lu_solve, min_eigen_sym, power_norm, sym_part, solve_linear

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
MONOTONE_TOL = 1e-10
NONEXPANSIVE_SLACK = 1e-9
SPOT_SAMPLES = 1000

PROBLEM_KINDS = (
    "bilinear_uv",
    "bilinear_matrix",
    "u_squared_v",
    "ouyang_xu",
    "huber_lagrangian",
    "random_linear_monotone",
)

Box = Tuple[List[float], List[float]]


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[operators] {msg}")


# -----------------------------------------------------------------------------
# Tipos
# -----------------------------------------------------------------------------
class MonotoneMap(_BaseModel):
    """Operador monótono univalente x ↦ A x.

    kind="linear": A x = M x + c (c opcional, instâncias afins).
    kind="analytic": A x = func(x); resolvente só se registrada em resolvent_fn.
    """
    dim: int
    kind: str = "linear"
    name: str = "linear"
    matrix: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    resolvent_fn: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    lipschitz: Optional[float] = None
    strong_mu: float = 0.0
    known_zero: Optional[np.ndarray] = None
    box: Optional[Box] = None
    params: dict = Field(default_factory=dict)

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear"

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_linear:
            out = self.matrix @ x
            return out + self.offset if self.offset is not None else out
        return np.asarray(self.func(x), dtype=float)

    __call__ = apply


class NonexpansiveMap(_BaseModel):
    dim: int
    name: str = "T"
    func: Callable[[np.ndarray], np.ndarray]
    known_fix: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    source: Optional[MonotoneMap] = None
    gamma: float = 1.0

    @property
    def is_linear(self) -> bool:
        return self.matrix is not None

    def apply(self, y) -> np.ndarray:
        return np.asarray(self.func(np.asarray(y, dtype=float)), dtype=float)

    __call__ = apply


class SaddleProblem(_BaseModel):
    """Problema de sela: x=(u,v) ↦ (∇_u L, −∇_v L) como MonotoneMap de dim n+m."""
    n: int
    m: int
    operator: MonotoneMap
    name: str = "saddle"
    lipschitz: Optional[float] = None
    strong_mu: float = 0.0
    known_saddle: Optional[np.ndarray] = None
    domain: Optional[str] = None

    @property
    def dim(self) -> int:
        return self.n + self.m

    @property
    def is_linear(self) -> bool:
        return self.operator.is_linear

    def saddle_grad(self, x) -> np.ndarray:
        return self.operator.apply(x)

    __call__ = saddle_grad


Problem = Union[SaddleProblem, MonotoneMap]


def as_monotone(P: Problem) -> MonotoneMap:
    if isinstance(P, SaddleProblem):
        return P.operator
    if isinstance(P, MonotoneMap):
        return P
    raise ParameterError(f"problema não suportado: {type(P).__name__}")


def known_solution(P: Problem) -> Optional[np.ndarray]:
    return P.known_saddle if isinstance(P, SaddleProblem) else P.known_zero


def linear_map(M, offset=None, name: str = "linear", strong_mu: float = 0.0,
               known_zero=None, lipschitz: Optional[float] = None) -> MonotoneMap:
    Mm = as_matrix(M, "M")
    if Mm.shape[0] != Mm.shape[1]:
        raise ParameterError(f"operador linear exige matriz quadrada, shape {Mm.shape}")
    c = None if offset is None else as_vector(offset, "offset")
    if lipschitz is None:
        lipschitz = power_norm(Mm)
    return MonotoneMap(
        dim=Mm.shape[0], kind="linear", name=name, matrix=Mm, offset=c,
        lipschitz=float(lipschitz), strong_mu=float(strong_mu),
        known_zero=None if known_zero is None else as_vector(known_zero),
    )


def zero_map(dim: int) -> MonotoneMap:
    return linear_map(np.zeros((dim, dim)), name="zero", lipschitz=0.0, known_zero=np.zeros(dim))


# -----------------------------------------------------------------------------
# Resolvente / correspondência
# -----------------------------------------------------------------------------
def _shifted_factors(M: np.ndarray, gamma: float):
    key = f"lu:{_cache.array_hash(M)}:{gamma!r}"
    hit = _cache.get(key)
    if hit is not None:
        return hit
    factors = lu_factor(np.eye(M.shape[0]) + gamma * M)
    _cache.set_(key, factors)
    _vprint(f"LU em cache para gamma={gamma!r} ({_cache.size()} entradas)")
    return factors


def resolvent(A: MonotoneMap, y, gamma: float = 1.0) -> np.ndarray:
    """x com x + γ·A x = y."""
    if not gamma > 0.0:
        raise ParameterError(f"gamma deve ser > 0, recebeu {gamma}")
    y = np.asarray(y, dtype=float)
    if A.is_linear:
        rhs = y if A.offset is None else y - gamma * A.offset
        return lu_solve(_shifted_factors(A.matrix, float(gamma)), rhs)
    if A.resolvent_fn is None:
        raise UnsupportedOperatorError(f"operador '{A.name}' não tem resolvente registrada")
    return np.asarray(A.resolvent_fn(y, float(gamma)), dtype=float)


def nonexpansive_from_monotone(A: MonotoneMap, gamma: float = 1.0) -> NonexpansiveMap:
    """T = 2·J_{γA} − I."""
    if not gamma > 0.0:
        raise ParameterError(f"gamma deve ser > 0, recebeu {gamma}")
    fix = None if A.known_zero is None else np.array(A.known_zero, dtype=float)
    if A.is_linear:
        d = A.dim
        R = solve_linear(np.eye(d) + gamma * A.matrix, np.eye(d))
        Tm = 2.0 * R - np.eye(d)
        shift = None if A.offset is None else -2.0 * gamma * (R @ A.offset)

        def _t_lin(y: np.ndarray) -> np.ndarray:
            out = Tm @ y
            return out + shift if shift is not None else out

        return NonexpansiveMap(dim=d, name=f"2J[{A.name}]-I", func=_t_lin, known_fix=fix,
                               matrix=Tm, source=A, gamma=float(gamma))
    if A.resolvent_fn is None:
        raise UnsupportedOperatorError(f"operador '{A.name}' não tem resolvente registrada")

    def _t(y: np.ndarray) -> np.ndarray:
        return 2.0 * resolvent(A, y, gamma) - y

    return NonexpansiveMap(dim=A.dim, name=f"2J[{A.name}]-I", func=_t, known_fix=fix,
                           source=A, gamma=float(gamma))


def yosida(A: MonotoneMap, delta: float) -> MonotoneMap:
    """A_δ = (1/δ)(I − J_{δA})."""
    if not delta > 0.0:
        raise ParameterError(f"delta deve ser > 0, recebeu {delta}")
    if A.is_linear:
        d = A.dim
        R = solve_linear(np.eye(d) + delta * A.matrix, np.eye(d))
        Md = (np.eye(d) - R) / delta
        off = None if A.offset is None else R @ A.offset
        lip = 1.0 / delta if A.lipschitz is None else min(1.0 / delta, A.lipschitz)
        return linear_map(Md, off, name=f"yosida[{A.name},{delta:g}]", lipschitz=lip,
                          known_zero=A.known_zero)
    if A.resolvent_fn is None:
        raise UnsupportedOperatorError(f"operador '{A.name}' não tem resolvente registrada")

    def _ad(x: np.ndarray) -> np.ndarray:
        return (x - resolvent(A, x, delta)) / delta

    return MonotoneMap(dim=A.dim, kind="analytic", name=f"yosida[{A.name},{delta:g}]",
                       func=_ad, lipschitz=1.0 / delta, known_zero=A.known_zero, box=A.box)


# -----------------------------------------------------------------------------
# Checagens amostradas
# -----------------------------------------------------------------------------
def _sample(dim: int, rng: np.random.Generator, box: Optional[Box]) -> np.ndarray:
    if box is None:
        return rng.standard_normal(dim)
    lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)
    return lo + (hi - lo) * rng.random(dim)


def check_monotone(A: Problem, samples: int = SPOT_SAMPLES, seed: int = 0) -> float:
    """Menor ⟨Ax−Ax′, x−x′⟩/‖x−x′‖² observado (≥ −tol ⇔ passa)."""
    op = as_monotone(A)
    if op.is_linear:
        return min_eigen_sym(sym_part(op.matrix))
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(samples):
        x, xp = _sample(op.dim, rng, op.box), _sample(op.dim, rng, op.box)
        dx = x - xp
        nd = float(dx @ dx)
        if nd == 0.0:
            continue
        worst = min(worst, float((op.apply(x) - op.apply(xp)) @ dx) / nd)
    return float(worst)


def check_nonexpansive(T: NonexpansiveMap, samples: int = SPOT_SAMPLES, seed: int = 0) -> float:
    """Maior razão ‖Tx−Ty‖/‖x−y‖ observada (≤ 1+1e-9 ⇔ passa)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x, y = rng.standard_normal(T.dim), rng.standard_normal(T.dim)
        nd = float(np.linalg.norm(x - y))
        if nd == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(T(x) - T(y))) / nd)
    return worst


# -----------------------------------------------------------------------------
# Geradores
# -----------------------------------------------------------------------------
def _bilinear_uv() -> SaddleProblem:
    op = linear_map([[0.0, 1.0], [-1.0, 0.0]], name="bilinear_uv", lipschitz=1.0,
                    known_zero=np.zeros(2))
    return SaddleProblem(n=1, m=1, operator=op, name="bilinear_uv", lipschitz=1.0,
                         known_saddle=np.zeros(2))


def _bilinear_matrix(M) -> SaddleProblem:
    B = as_matrix(M, "M")
    n, m = B.shape
    full = np.block([[np.zeros((n, n)), B], [-B.T, np.zeros((m, m))]])
    lip = power_norm(B)
    op = linear_map(full, name="bilinear_matrix", lipschitz=lip, known_zero=np.zeros(n + m))
    return SaddleProblem(n=n, m=m, operator=op, name="bilinear_matrix", lipschitz=lip,
                         known_saddle=np.zeros(n + m))


def _u_squared_v() -> SaddleProblem:
    def _grad(x: np.ndarray) -> np.ndarray:
        u, v = x[0], x[1]
        return np.array([2.0 * u * v, -u * u])

    box: Box = ([-1.0, 0.0], [1.0, 2.0])
    op = MonotoneMap(dim=2, kind="analytic", name="u_squared_v", func=_grad, box=box)
    return SaddleProblem(n=1, m=1, operator=op, name="u_squared_v",
                         domain="[-1,1] x [0,inf)")


def ouyang_xu_blocks(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, b, g) da construção de pior caso bilinear."""
    A = np.zeros((n, n))
    for i in range(n):
        A[i, n - 1 - i] = 0.25
        if i <= n - 2:
            A[i, n - 2 - i] = -0.25
    b = 0.25 * np.ones(n)
    g = np.zeros(n)
    g[-1] = 0.25
    return A, b, g


def _ouyang_xu(n: int, mu: float = 0.0) -> SaddleProblem:
    if n < 2:
        raise ParameterError(f"ouyang_xu exige n >= 2, recebeu {n}")
    if mu < 0.0:
        raise ParameterError(f"mu deve ser >= 0, recebeu {mu}")
    A, b, g = ouyang_xu_blocks(n)
    G = 2.0 * A.T @ A
    I = np.eye(n)
    M = np.block([[G + mu * I, -A.T], [A, mu * I]])
    c = np.concatenate([-g, -b])
    x_star = solve_linear(M, -c)
    lip = 1.0 + mu
    op = linear_map(M, c, name="ouyang_xu", lipschitz=lip, strong_mu=mu, known_zero=x_star)
    _vprint(f"ouyang_xu n={n} mu={mu} ‖x*‖={np.linalg.norm(x_star):.4g}")
    return SaddleProblem(n=n, m=n, operator=op, name="ouyang_xu", lipschitz=lip,
                         strong_mu=mu, known_saddle=x_star)


def huber_instance(n: int, m: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not (0 < m < n):
        raise ParameterError(f"huber exige 0 < m < n, recebeu n={n} m={m}")
    rng = np.random.default_rng(seed)
    A = rng.normal(0.0, 1.0 / n, size=(m, n))
    u_bar = np.zeros(n)
    support = rng.choice(n, size=max(1, n // 10), replace=False)
    u_bar[support] = rng.random(support.size)
    return A, A @ u_bar


def _huber_lagrangian(A=None, b=None, delta: float = 0.1, n: int = 100, m: int = 20,
                      seed: Optional[int] = None) -> SaddleProblem:
    if not delta > 0.0:
        raise ParameterError(f"delta deve ser > 0, recebeu {delta}")
    if A is None:
        if seed is None:
            raise ParameterError("huber_lagrangian aleatório exige seed")
        A, b = huber_instance(n, m, seed)
    Am = as_matrix(A, "A")
    bv = as_vector(b, "b")
    m_, n_ = Am.shape
    if bv.shape[0] != m_:
        raise ParameterError(f"b deve ter {m_} entradas, recebeu {bv.shape[0]}")

    def _grad(x: np.ndarray) -> np.ndarray:
        u, v = x[:n_], x[n_:]
        nu = float(np.linalg.norm(u))
        gh = u if nu <= delta else (delta / nu) * u
        return np.concatenate([gh + Am.T @ v, -(Am @ u - bv)])

    lip = 1.0 + power_norm(Am)
    op = MonotoneMap(dim=n_ + m_, kind="analytic", name="huber_lagrangian", func=_grad,
                     lipschitz=lip, params={"delta": delta})
    return SaddleProblem(n=n_, m=m_, operator=op, name="huber_lagrangian", lipschitz=lip)


def _random_linear_monotone(d: int, seed: int, mu: float = 0.0, shifted: bool = False) -> MonotoneMap:
    if d < 1:
        raise ParameterError(f"d deve ser >= 1, recebeu {d}")
    if mu < 0.0:
        raise ParameterError(f"mu deve ser >= 0, recebeu {mu}")
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((d, d)) / np.sqrt(d)
    B = rng.standard_normal((d, d)) / np.sqrt(d)
    M = P.T @ P + (B - B.T) + mu * np.eye(d)
    x_star = rng.standard_normal(d) if shifted else np.zeros(d)
    c = -(M @ x_star) if shifted else None
    return linear_map(M, c, name="random_linear_monotone", strong_mu=mu, known_zero=x_star,
                      lipschitz=float(np.linalg.norm(M, 2)))


def make_problem(kind: str, **params: Any) -> Problem:
    """Fábrica dos problemas de benchmark."""
    try:
        if kind == "bilinear_uv":
            return _bilinear_uv()
        if kind == "bilinear_matrix":
            return _bilinear_matrix(params["M"])
        if kind == "u_squared_v":
            return _u_squared_v()
        if kind == "ouyang_xu":
            return _ouyang_xu(int(params.get("n", 200)), float(params.get("mu", 0.0)))
        if kind == "huber_lagrangian":
            return _huber_lagrangian(
                params.get("A"), params.get("b"), float(params.get("delta", 0.1)),
                int(params.get("n", 100)), int(params.get("m", 20)), params.get("seed"),
            )
        if kind == "random_linear_monotone":
            if params.get("seed") is None:
                raise ParameterError("random_linear_monotone exige seed")
            return _random_linear_monotone(int(params.get("d", 4)), int(params["seed"]),
                                           float(params.get("mu", 0.0)),
                                           bool(params.get("shifted", False)))
    except KeyError as e:
        raise ParameterError(f"parâmetro ausente para '{kind}': {e}") from None
    raise ParameterError(f"problema desconhecido: '{kind}'")
