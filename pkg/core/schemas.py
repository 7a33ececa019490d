# core/schemas.py
from __future__ import annotations

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError

try:
    from rapidfuzz import process as _fuzz_process
except Exception:  # pragma: no cover
    _fuzz_process = None

FIXED_POINT_METHODS = ("ohm", "dual-ohm", "composed", "family")
MINIMAX_METHODS = ("eg", "feg", "dual-feg")
ODE_METHODS = ("anchor", "dual-anchor", "dual-anchor-yosida")
ALL_METHODS = FIXED_POINT_METHODS + MINIMAX_METHODS + ODE_METHODS


def suggest(name: str, choices: Sequence[str]) -> Optional[str]:
    """Nome conhecido mais próximo (None sem rapidfuzz ou sem candidato razoável)."""
    if _fuzz_process is None or not choices:
        return None
    hit = _fuzz_process.extractOne(name, list(choices), score_cutoff=60)
    return hit[0] if hit else None


def unknown_name_message(what: str, name: str, choices: Sequence[str]) -> str:
    msg = f"{what} desconhecido: '{name}'"
    hint = suggest(name, choices)
    return f"{msg} (quis dizer '{hint}'?)" if hint else msg


# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
class ProblemSpec(BaseModel):
    kind: str
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    model_config = ConfigDict(extra="ignore")


class OutputSpec(BaseModel):
    dir: str = "outputs"
    csv: str = "trace.csv"
    report: str = "report.json"
    plot: bool = False
    model_config = ConfigDict(extra="ignore")


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    problem: ProblemSpec
    methods: List[str]
    alpha: Optional[float] = None
    gamma: float = 1.0               # escala da resolvente nos métodos de ponto fixo
    N: int = 100
    Nprime: Optional[int] = None     # troca do algoritmo composto
    family_gamma: float = 0.5        # interpolação OHM/Dual-OHM
    T: Optional[float] = None
    steps: int = 1000
    yosida_delta: float = 1e-2
    x0: Optional[List[float]] = None
    x0_seed: Optional[int] = None   # None → usa seed
    x0_norm: Optional[float] = 1.0
    output: OutputSpec = Field(default_factory=OutputSpec)
    scale: float = 1.0
    seed: int = 0
    model_config = ConfigDict(extra="ignore")


class CheckResult(BaseModel):
    name: str
    method: str
    value: Optional[float] = None
    bound: Optional[float] = None
    ok: bool = True
    soft: bool = False
    detail: str = ""


class ExperimentReport(BaseModel):
    name: str
    problem: str
    methods: List[str]
    series: Dict[str, Dict[str, List[Optional[float]]]] = Field(default_factory=dict)
    checks: List[CheckResult] = Field(default_factory=list)
    csv_path: Optional[str] = None
    plot_paths: List[str] = Field(default_factory=list)
    wall_clock: float = 0.0
    seed: int = 0

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks if not c.soft)

    def summary(self) -> Dict[str, Any]:
        out = self.model_dump(exclude={"series"})
        out["passed"] = self.passed
        out["terminal"] = {m: {k: v[-1] for k, v in s.items() if v} for m, s in self.series.items()}
        return out


# -----------------------------------------------------------------------------
# Carregamento
# -----------------------------------------------------------------------------
def parse_config(data: Dict[str, Any], source: str = "<dict>") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: esperado objeto no topo do arquivo")
    try:
        cfg = ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"{source}: {e}") from None
    cfg.methods = [m.strip().lower().replace("_", "-") for m in cfg.methods]
    bad = [m for m in cfg.methods if m not in ALL_METHODS]
    if bad:
        raise ConfigError(f"{source}: " + unknown_name_message("método", bad[0], ALL_METHODS))
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Lê .json ou .toml; erros de sintaxe/esquema viram ConfigError."""
    ext = os.path.splitext(path)[1].lower()
    try:
        if ext == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
        elif ext == ".json":
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        else:
            raise ConfigError(f"formato de config não suportado: '{ext}' (use .json ou .toml)")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"{path}: sintaxe inválida: {e}") from None
    return parse_config(data, source=os.path.basename(path))


def loads_config(text: str, fmt: str = "json") -> ExperimentConfig:
    try:
        data = tomllib.loads(text) if fmt == "toml" else json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"sintaxe inválida: {e}") from None
    return parse_config(data)
