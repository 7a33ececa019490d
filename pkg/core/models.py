# core/models.py
from __future__ import annotations
from typing import Any, Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# --------------------------------------------------------------------
# Base: aceita ndarray como campo
# --------------------------------------------------------------------
class _BaseModel(BaseModel):
    model_config = ConfigDict(
        arbitrary_types_allowed=True,
        extra="ignore",
    )


# --------------------------------------------------------------------
# Trajetórias discretas
# --------------------------------------------------------------------
Convention = Literal["residual", "resolvent", "gradient"]


class Trace(_BaseModel):
    """Registro por iteração de um método discreto.

    iterates: pontos inteiros (y_k ou x_k), shape (K, d).
    half_iterates: x_{k+1/2} dos métodos tipo extragradiente, shape (N, d).
    aux: sequência z_k dos métodos duais.
    resolvents: x_1..x_K = J(y_0)..J(y_{K-1}) nas formas proximais.
    """
    method: str
    convention: Convention = "residual"
    iterates: np.ndarray
    half_iterates: Optional[np.ndarray] = None
    aux: Optional[np.ndarray] = None
    resolvents: Optional[np.ndarray] = None
    metrics: Dict[str, List[float]] = Field(default_factory=dict)
    evals: int = 0
    horizon: Optional[int] = None
    gamma: float = 1.0
    alpha: Optional[float] = None
    flags: Dict[str, Any] = Field(default_factory=dict)

    @property
    def terminal(self) -> np.ndarray:
        return self.iterates[-1]

    def interleaved(self) -> np.ndarray:
        """Pontos nas posições 0..2N (posição ímpar = meio-passo)."""
        if self.half_iterates is None:
            raise ValueError(f"trace '{self.method}' não guarda meio-passos")
        n_half = len(self.half_iterates)
        out = np.empty((2 * n_half + 1, self.iterates.shape[1]))
        out[0::2] = self.iterates[: n_half + 1]
        out[1::2] = self.half_iterates
        return out

    def rows(self) -> Iterator[Tuple[int, str, float]]:
        for name in sorted(self.metrics):
            for k, v in enumerate(self.metrics[name]):
                yield k, name, float(v)


class LyapunovSeries(_BaseModel):
    kind: Literal["U_ohm", "V_dual_ohm", "V_dual_feg", "V_continuous"]
    values: List[float]
    monotone: bool = True
    violations: int = 0
    max_identity_error: Optional[float] = None
    lemma_ok: Optional[bool] = None
    extras: Dict[str, List[float]] = Field(default_factory=dict)


# --------------------------------------------------------------------
# Família ótima
# --------------------------------------------------------------------
class PVector(_BaseModel):
    N: int
    p: List[float]
    label: str = "custom"

    @model_validator(mode="after")
    def _check_len(self) -> "PVector":
        if self.N < 2:
            raise ValueError("N deve ser >= 2")
        if len(self.p) != self.N - 1:
            raise ValueError(f"p deve ter N-1={self.N - 1} entradas, recebeu {len(self.p)}")
        return self


class FamilyCertificate(_BaseModel):
    N: int
    lambda_sub: List[float]          # λ_{k+1,k}, k=1..N-2
    lambda_last: List[float]         # λ_{N,k}, k=1..N-1
    q: List[float]                   # q_k, k=1..N-1
    lambda_sum_error: float = 0.0
    max_residual: Optional[float] = None
    probe_residual: Optional[float] = None
    psd_margin: Optional[float] = None
    threshold: float = 1e-9

    @property
    def passed(self) -> bool:
        worst = max(x for x in (self.max_residual, self.probe_residual, 0.0) if x is not None)
        return worst <= self.threshold

    def summary(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "lambda_sub": self.lambda_sub,
            "lambda_last": self.lambda_last,
            "q": self.q,
            "lambda_sum_error": self.lambda_sum_error,
            "max_residual": self.max_residual,
            "probe_residual": self.probe_residual,
            "psd_margin": self.psd_margin,
            "passed": self.passed,
        }


# --------------------------------------------------------------------
# H-dualidade
# --------------------------------------------------------------------
class QuadForm(_BaseModel):
    S: np.ndarray

    @property
    def n(self) -> int:
        return int(self.S.shape[0])

    @model_validator(mode="after")
    def _check_sym(self) -> "QuadForm":
        S = np.asarray(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"S deve ser quadrada, shape {S.shape}")
        scale = max(1.0, float(np.max(np.abs(S), initial=0.0)))
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * scale:
            raise ValueError("S não simétrica")
        self.S = S
        return self

    def value(self, g: np.ndarray) -> float:
        g = np.asarray(g, dtype=float)
        if g.ndim == 1:
            return float(g @ self.S @ g)
        # g: (n, d) → Σ s_ij ⟨g_i, g_j⟩
        return float(np.sum(self.S * (g @ g.T)))


class ProofWeights(_BaseModel):
    kind: Literal["primal", "dual"]
    w: List[float]
    tau: float

    @property
    def N(self) -> int:
        return len(self.w) + 1

    @model_validator(mode="after")
    def _check_pos(self) -> "ProofWeights":
        if any(not (x > 0.0) for x in self.w):
            raise ValueError("pesos devem ser estritamente positivos")
        if not np.isfinite(self.tau):
            raise ValueError("tau não finito")
        return self


class DualityReport(_BaseModel):
    N: int
    discrepancy: float               # max |S(g) − T(F(g))| / (1+‖g‖²)
    min_eig_primal: float
    min_eig_dual: float
    psd_primal: bool
    psd_dual: bool

    @property
    def sign_agrees(self) -> bool:
        return self.psd_primal == self.psd_dual

    def summary(self) -> Dict[str, Any]:
        out = self.model_dump()
        out["sign_agrees"] = self.sign_agrees
        return out


# --------------------------------------------------------------------
# EDOs
# --------------------------------------------------------------------
class OdeTrajectory(_BaseModel):
    model: Literal["anchor", "dual-anchor", "dual-anchor-yosida"]
    T: float
    times: np.ndarray
    X: np.ndarray
    Xdot: np.ndarray
    Z: Optional[np.ndarray] = None
    delta: float = 0.0
    tail_slack: float = 0.0
    monitors: Dict[str, List[float]] = Field(default_factory=dict)
    flags: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_grid(self) -> "OdeTrajectory":
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0.0):
            raise ValueError("grade de tempo deve ser estritamente crescente")
        return self

    @property
    def terminal(self) -> np.ndarray:
        return self.X[-1]
