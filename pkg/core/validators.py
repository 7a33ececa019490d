# core/validators.py
from __future__ import annotations

import math
from typing import List

from .errors import ConfigError
from .operators import PROBLEM_KINDS
from .schemas import FIXED_POINT_METHODS, MINIMAX_METHODS, ExperimentConfig, unknown_name_message

RANDOM_KINDS = {"random_linear_monotone", "huber_lagrangian"}
LINEAR_KINDS = {"bilinear_uv", "bilinear_matrix", "ouyang_xu", "random_linear_monotone"}
SIZE_KEYS = ("n", "d", "m")


def _ceil(x: float) -> int:
    return int(math.ceil(x - 1e-12))


def apply_scale(cfg: ExperimentConfig) -> ExperimentConfig:
    """Multiplica N, steps e tamanhos de problema por cfg.scale (arredonda para cima)."""
    s = float(cfg.scale)
    if not s > 0.0:
        raise ConfigError(f"scale deve ser > 0, recebeu {s}")
    if s == 1.0:
        return cfg
    out = cfg.model_copy(deep=True)
    if out.N > 0:
        out.N = max(1, _ceil(out.N * s))
    out.steps = max(10, _ceil(out.steps * s))
    if out.Nprime is not None:
        out.Nprime = max(2, min(out.N - 1, _ceil(out.Nprime * s)))
    for key in SIZE_KEYS:
        if key in out.problem.params and out.x0 is None:
            out.problem.params[key] = max(2, _ceil(int(out.problem.params[key]) * s))
    out.scale = 1.0
    return out


def problem_params(cfg: ExperimentConfig) -> dict:
    params = dict(cfg.problem.params)
    if cfg.problem.kind in RANDOM_KINDS and "A" not in params:
        inner, outer = params.get("seed"), cfg.problem.seed
        if inner is not None and outer is not None and int(inner) != int(outer):
            raise ConfigError(f"seed conflitante: problem.seed={outer} e problem.params.seed={inner}")
        seed = outer if inner is None else inner
        if seed is None:
            raise ConfigError(f"problema '{cfg.problem.kind}' exige seed")
        params["seed"] = int(seed)
    return params


def validate(cfg: ExperimentConfig) -> List[str]:
    """Combinações método/problema; devolve avisos não fatais."""
    kind = cfg.problem.kind
    if kind not in PROBLEM_KINDS:
        raise ConfigError(unknown_name_message("problema", kind, PROBLEM_KINDS))
    problem_params(cfg)
    if not cfg.methods:
        raise ConfigError("lista de métodos vazia")
    warns: List[str] = []
    if cfg.N < 0:
        raise ConfigError(f"N deve ser >= 0, recebeu {cfg.N}")
    for m in cfg.methods:
        if m in FIXED_POINT_METHODS:
            if kind not in LINEAR_KINDS:
                raise ConfigError(f"método '{m}' exige resolvente: problema '{kind}' não suportado")
            if cfg.N < 1 or (m in ("dual-ohm", "family", "composed") and cfg.N < 2):
                raise ConfigError(f"método '{m}' exige N maior (recebeu N={cfg.N})")
            if m == "family" and cfg.N < 3:
                raise ConfigError("método 'family' exige N >= 3")
            if m == "composed" and (cfg.Nprime is None or not 2 <= cfg.Nprime < cfg.N):
                raise ConfigError("método 'composed' exige 2 <= Nprime < N")
        elif m in MINIMAX_METHODS:
            if cfg.alpha is not None and not cfg.alpha > 0.0:
                raise ConfigError(f"alpha deve ser > 0, recebeu {cfg.alpha}")
            if cfg.alpha is None and kind == "u_squared_v":
                raise ConfigError("u_squared_v não tem constante de Lipschitz global: informe alpha")
        else:
            if cfg.T is None or not cfg.T > 0.0:
                raise ConfigError(f"método '{m}' exige T > 0")
            if cfg.steps < 10:
                raise ConfigError(f"steps deve ser >= 10, recebeu {cfg.steps}")
            if m == "dual-anchor-yosida" and kind not in LINEAR_KINDS:
                raise ConfigError(f"'{m}' exige resolvente: problema '{kind}' não suportado")
            if kind == "u_squared_v":
                raise ConfigError("EDOs exigem operador Lipschitz: u_squared_v não suportado")
    if cfg.x0 is None and cfg.x0_norm is None:
        warns.append("x0_norm ausente: ponto inicial gaussiano sem normalização")
    return warns
