# core/orchestrator.py
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import fixedpoint as fp
from . import minimax as mm
from . import ode
from .errors import AnchorLabError, ConfigError, ParseError
from .family import named_pvector, synthesize
from .hmatrix import run_fp_hmatrix
from .operators import Problem, as_monotone, known_solution, make_problem, nonexpansive_from_monotone
from .schemas import (
    FIXED_POINT_METHODS, MINIMAX_METHODS, CheckResult, ExperimentConfig, ExperimentReport,
    parse_config,
)
from .validators import LINEAR_KINDS, apply_scale, problem_params, validate

# -----------------------------------------------------------------------------
# Config
# -----------------------------------------------------------------------------
VERBOSE = os.getenv("ANCHORLAB_VERBOSE", "0") == "1"
CSV_HEADER = ["method", "iter", "metric", "value"]
BOUND_RTOL = 1e-9
ODE_RTOL = 1e-7
LINEAR_MATCH_TOL = 1e-8
NONLINEAR_GAP_MIN = 1e-6
SVG_HASHSALT = "anchorlab"

Series = Dict[str, List[Optional[float]]]


def _vprint(msg: str) -> None:
    if VERBOSE:
        print(f"[orchestrator] {msg}")


# -----------------------------------------------------------------------------
# Presets (escala de bancada)
# -----------------------------------------------------------------------------
PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1a": {
        "name": "fig1a", "problem": {"kind": "bilinear_uv"},
        "methods": ["eg", "feg", "dual-feg"], "alpha": 0.005, "N": 1000,
        "x0_norm": 1.0, "seed": 0,
    },
    "fig1b": {
        "name": "fig1b", "problem": {"kind": "u_squared_v"},
        "methods": ["eg", "feg", "dual-feg"], "alpha": 0.05, "N": 2000,
        "x0": [-1.0, 1.0],
    },
    "fig2a": {
        "name": "fig2a", "problem": {"kind": "ouyang_xu", "params": {"n": 50}},
        "methods": ["feg", "dual-feg"], "alpha": 1.0, "N": 2000, "x0_norm": 0.0,
    },
    "fig2b": {
        "name": "fig2b", "problem": {"kind": "ouyang_xu", "params": {"n": 50, "mu": 0.1}},
        "methods": ["feg", "dual-feg"], "N": 2000, "x0_norm": 0.0,
    },
    "fig3": {
        "name": "fig3",
        "problem": {"kind": "huber_lagrangian", "params": {"n": 100, "m": 20, "delta": 0.1}, "seed": 0},
        "methods": ["eg", "feg", "dual-feg"], "alpha": 0.5, "N": 10000, "x0_norm": 1.0,
    },
}


def preset_config(name: str, out_dir: Optional[str] = None) -> ExperimentConfig:
    if name not in PRESETS:
        from .schemas import unknown_name_message
        raise ConfigError(unknown_name_message("preset", name, sorted(PRESETS)))
    data = json.loads(json.dumps(PRESETS[name]))
    if out_dir:
        data["output"] = {"dir": out_dir, "csv": f"{name}.csv", "report": f"{name}.json"}
    return parse_config(data, source=f"preset:{name}")


# -----------------------------------------------------------------------------
# Utils
# -----------------------------------------------------------------------------
def write_json_atomic(path: str, data: Any) -> None:
    out_dir = os.path.dirname(path) or "."
    os.makedirs(out_dir, exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
        f.write("\n")
    os.replace(tmp, path)


def initial_point(cfg: ExperimentConfig, dim: int) -> np.ndarray:
    if cfg.x0 is not None:
        x0 = np.asarray(cfg.x0, dtype=float)
        if x0.shape != (dim,):
            raise ConfigError(f"x0 deve ter {dim} entradas, recebeu {x0.shape[0]}")
        return x0
    if cfg.x0_norm == 0.0:
        return np.zeros(dim)
    seed = cfg.seed if cfg.x0_seed is None else cfg.x0_seed
    v = np.random.default_rng(seed).standard_normal(dim)
    if cfg.x0_norm is not None:
        v *= cfg.x0_norm / float(np.linalg.norm(v))
    return v


def _bound_check(method: str, values: Sequence[Optional[float]], bound: Sequence[Optional[float]],
                 rtol: float = BOUND_RTOL, slack: float = 0.0) -> CheckResult:
    worst, at = -np.inf, None
    for k, (v, b) in enumerate(zip(values, bound)):
        if v is None or b is None:
            continue
        excess = v - b - rtol * (1.0 + b) - slack
        if excess > worst:
            worst, at = excess, k
    if at is None:
        return CheckResult(name="bound", method=method, ok=True, detail="sem cota")
    return CheckResult(name="bound", method=method, value=values[at], bound=bound[at],
                       ok=bool(worst <= 0.0), detail=f"pior k={at}")


def _lyap_check(method: str, series) -> CheckResult:
    return CheckResult(name="lyapunov", method=method, value=float(series.violations),
                       bound=0.0, ok=bool(series.monotone),
                       detail=f"{series.kind} erro_identidade={series.max_identity_error or 0.0:.2e}")


# -----------------------------------------------------------------------------
# Execução por família de método
# -----------------------------------------------------------------------------
def _run_fixed_point(method: str, cfg: ExperimentConfig, P: Problem, x0: np.ndarray,
                     dist0_sq: Optional[float]) -> Tuple[Series, List[CheckResult]]:
    A = as_monotone(P)
    T = nonexpansive_from_monotone(A, cfg.gamma)
    N = cfg.N
    checks: List[CheckResult] = []
    if method == "ohm":
        tr = fp.run_ohm(T, x0, N)
        checks.append(_lyap_check(method, fp.lyapunov_series("U_ohm", A, tr)))
    elif method == "dual-ohm":
        tr = fp.run_dual_ohm(T, x0, N)
        checks.append(_lyap_check(method, fp.lyapunov_series("V_dual_ohm", A, tr)))
    elif method == "composed":
        tr = fp.run_composed(T, x0, N, int(cfg.Nprime))
    else:
        H = synthesize(named_pvector("interpolate", N, cfg.family_gamma))
        tr = run_fp_hmatrix(H, T, x0)
    res = tr.metrics["residual_sq"]
    series: Series = {"residual_sq": list(res)}
    if dist0_sq is not None:
        if method == "ohm":
            bound = [4.0 * dist0_sq / (k + 1) ** 2 for k in range(len(res))]
        else:
            bound = [None] * (len(res) - 1) + [4.0 * dist0_sq / N ** 2]
        series["bound"] = bound
        checks.append(_bound_check(method, res, bound))
    return series, checks


def _run_minimax(method: str, cfg: ExperimentConfig, P: Problem, x0: np.ndarray,
                 dist0_sq: Optional[float]) -> Tuple[Series, List[CheckResult], Any]:
    tr = mm.run(method, P, x0, cfg.alpha, cfg.N)
    gn = tr.metrics["grad_norm_sq"]
    series: Series = {"grad_norm_sq": list(gn)}
    checks: List[CheckResult] = []
    if tr.flags.get("step_violation"):
        checks.append(CheckResult(name="bound", method=method, ok=True, soft=True,
                                  detail="alpha*L > 1: sem garantia, cota não verificada"))
    elif dist0_sq is not None and method != "eg" and cfg.N >= 1:
        full = mm.bound_series(dist0_sq, tr.alpha, cfg.N)
        bound = full if method == "feg" else [None] * cfg.N + [full[-1]]
        series["bound"] = bound
        checks.append(_bound_check(method, gn, bound))
    if method == "dual-feg" and cfg.N >= 1 and not tr.flags.get("step_violation"):
        chk = _lyap_check(method, mm.dual_feg_lyapunov(P, tr))
        # u²v só é monótono em u ∈ [−1,1], v ≥ 0
        chk.soft = cfg.problem.kind == "u_squared_v"
        checks.append(chk)
    return series, checks, tr


def _run_ode(method: str, cfg: ExperimentConfig, P: Problem, x0: np.ndarray,
             x_star: Optional[np.ndarray]) -> Tuple[Series, List[CheckResult], Any]:
    T, steps = float(cfg.T), int(cfg.steps)
    checks: List[CheckResult] = []
    if method == "anchor":
        traj = ode.integrate_anchor(P, x0, T, steps)
    elif method == "dual-anchor":
        traj = ode.integrate_dual_anchor(P, x0, T, steps)
    else:
        traj = ode.integrate_dual_anchor_yosida(P, cfg.yosida_delta, x0, T, steps)
    gn = traj.monitors["grad_norm_sq"]
    series: Series = {"grad_norm_sq": list(gn), "time": traj.times.tolist()}
    if traj.model != "anchor":
        series["V"] = list(traj.monitors["V"])
        series["Psi"] = list(traj.monitors["Psi"])
        viol = int(traj.flags["V_violations"]) + int(traj.flags["Psi_violations"])
        checks.append(CheckResult(name="lyapunov", method=method, value=float(viol), bound=0.0,
                                  ok=viol == 0, detail="violações de V(t) e Ψ(t)"))
    if x_star is not None:
        d2 = float((x0 - x_star) @ (x0 - x_star))
        if traj.model == "anchor":
            bound = [None] + [4.0 * d2 / t ** 2 for t in traj.times[1:]]
            series["bound"] = bound
            checks.append(_bound_check(method, gn, bound, rtol=ODE_RTOL))
        elif traj.model == "dual-anchor":
            rc = ode.rate_check(traj, P, x_star)
            series["bound"] = [None] * (len(gn) - 1) + [rc["bound"]]
            checks.append(CheckResult(name="bound", method=method, value=rc["value"],
                                      bound=rc["bound"] + rc["slack"], ok=bool(rc["ok"])))
    return series, checks, traj


# -----------------------------------------------------------------------------
# Experimento
# -----------------------------------------------------------------------------
def _soft_checks(cfg: ExperimentConfig, P: Problem, x0: np.ndarray,
                 traces: Dict[str, Any]) -> List[CheckResult]:
    out: List[CheckResult] = []
    if "feg" in traces and "dual-feg" in traces:
        a, b = traces["feg"].terminal, traces["dual-feg"].terminal
        gap = float(np.linalg.norm(a - b)) / (1.0 + float(np.linalg.norm(x0)))
        if cfg.problem.kind in LINEAR_KINDS:
            out.append(CheckResult(name="linear_terminal_match", method="feg|dual-feg", value=gap,
                                   bound=LINEAR_MATCH_TOL, ok=gap <= LINEAR_MATCH_TOL))
        else:
            out.append(CheckResult(name="nonlinear_terminal_gap", method="feg|dual-feg", value=gap,
                                   bound=NONLINEAR_GAP_MIN, ok=gap > NONLINEAR_GAP_MIN, soft=True))
        mu = getattr(P, "strong_mu", 0.0)
        if mu > 0.0 and cfg.N >= 10:
            k = cfg.N // 10
            f_val = traces["feg"].metrics["grad_norm_sq"][k]
            d_val = traces["dual-feg"].metrics["grad_norm_sq"][k]
            out.append(CheckResult(name="early_plateau", method="dual-feg<feg", value=d_val, bound=f_val,
                                   ok=d_val < f_val, soft=True, detail=f"k={k}"))
    if "anchor" in traces and "dual-anchor" in traces and cfg.problem.kind in LINEAR_KINDS:
        gap = float(np.linalg.norm(traces["anchor"] - traces["dual-anchor"]))
        out.append(CheckResult(name="ode_terminal_agreement", method="anchor|dual-anchor", value=gap,
                               ok=True, soft=True, detail="informativo"))
    for c in out:
        if c.soft:
            _vprint(f"checagem suave {c.name}: {c.value!r} vs {c.bound!r}")
    return out


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentReport:
    """Executa todos os métodos do config; CSV determinístico + relatório JSON."""
    t0 = time.perf_counter()
    cfg = apply_scale(cfg)
    for w in validate(cfg):
        _vprint(w)
    try:
        P = make_problem(cfg.problem.kind, **problem_params(cfg))
    except AnchorLabError as e:
        raise ConfigError(str(e)) from None
    A = as_monotone(P)
    x0 = initial_point(cfg, A.dim)
    x_star = known_solution(P)
    dist0_sq = None if x_star is None else float((x0 - x_star) @ (x0 - x_star))

    report = ExperimentReport(name=cfg.name, problem=cfg.problem.kind, methods=list(cfg.methods),
                              seed=cfg.seed)
    traces: Dict[str, Any] = {}
    for m in cfg.methods:
        if m in FIXED_POINT_METHODS:
            series, checks = _run_fixed_point(m, cfg, P, x0, dist0_sq)
        elif m in MINIMAX_METHODS:
            series, checks, tr = _run_minimax(m, cfg, P, x0, dist0_sq)
            traces[m] = tr
        else:
            series, checks, traj = _run_ode(m, cfg, P, x0, x_star)
            traces[m] = traj.terminal
        report.series[m] = series
        report.checks.extend(checks)
        _vprint(f"{m}: terminal={next(iter(series.values()))[-1]!r}")
    report.checks.extend(_soft_checks(cfg, P, x0, traces))

    if write:
        out_dir = cfg.output.dir
        csv_path = os.path.join(out_dir, cfg.output.csv)
        write_csv(csv_path, report)
        report.csv_path = csv_path
        if cfg.output.plot:
            report.plot_paths = plot(csv_path, out_dir)
    report.wall_clock = time.perf_counter() - t0
    if write:
        write_json_atomic(os.path.join(cfg.output.dir, cfg.output.report), report.summary())
    return report


# -----------------------------------------------------------------------------
# CSV
# -----------------------------------------------------------------------------
def csv_rows(report: ExperimentReport) -> List[List[str]]:
    rows: List[List[str]] = []
    for m in report.methods:
        series = report.series.get(m, {})
        for metric in sorted(series):
            for k, v in enumerate(series[metric]):
                if v is None:
                    continue
                rows.append([m, str(k), metric, repr(float(v))])
    return rows


def write_csv(path: str, report: ExperimentReport) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(csv_rows(report))
    os.replace(tmp, path)
    return path


def read_csv(path: str) -> Dict[str, Dict[str, Tuple[List[int], List[float]]]]:
    """method → metric → (iters, values). Esquema divergente ou vazio → ParseError."""
    out: Dict[str, Dict[str, Tuple[List[int], List[float]]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"CSV vazio: {path}")
        if [h.strip() for h in header] != CSV_HEADER:
            raise ParseError(f"cabeçalho inesperado em {path}: {header}")
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{i}: esperado 4 colunas, recebeu {len(row)}")
            try:
                k, v = int(row[1]), float(row[3])
            except ValueError as e:
                raise ParseError(f"{path}:{i}: {e}") from None
            iters, vals = out.setdefault(row[0], {}).setdefault(row[2], ([], []))
            iters.append(k)
            vals.append(v)
    if not out:
        raise ParseError(f"CSV sem linhas de dados: {path}")
    return out


# -----------------------------------------------------------------------------
# SVG
# -----------------------------------------------------------------------------
def plot(csv_path: str, out_dir: Optional[str] = None) -> List[str]:
    """Um SVG por métrica: escala log, cota tracejada quando presente."""
    data = read_csv(csv_path)
    import matplotlib
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    # sem pyplot: o lote chama plot a partir de threads
    matplotlib.rcParams["svg.hashsalt"] = SVG_HASHSALT
    out_dir = out_dir or os.path.dirname(csv_path) or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(csv_path))[0]
    metrics = sorted({m for per in data.values() for m in per if m not in ("bound", "time")})
    paths: List[str] = []
    for metric in metrics:
        fig = Figure(figsize=(6, 4))
        FigureCanvasAgg(fig)
        ax = fig.add_subplot()
        for method, per in data.items():
            if metric not in per:
                continue
            it, vals = per[metric]
            ax.semilogy(it, vals, label=method)
            if "bound" in per:
                bi, bv = per["bound"]
                ax.semilogy(bi, bv, "k--", linewidth=1.0, label=f"{method} (cota)")
        ax.set_xlabel("iteração")
        ax.set_ylabel(metric)
        ax.legend()
        path = os.path.join(out_dir, f"{stem}_{metric}.svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        paths.append(path)
    return paths


# -----------------------------------------------------------------------------
# Lote
# -----------------------------------------------------------------------------
def run_batch(cfgs: Sequence[ExperimentConfig], jobs: int = 1,
              index_dir: Optional[str] = None) -> Tuple[List[ExperimentReport], str]:
    """Experimentos independentes em paralelo; index.json escrito uma vez ao final."""
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ConfigError("nomes de experimento repetidos no lote")
    reports: Dict[str, ExperimentReport] = {}
    errors: Dict[str, str] = {}
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        futs = {ex.submit(run_experiment, c): c.name for c in cfgs}
        for fut in as_completed(futs):
            name = futs[fut]
            try:
                reports[name] = fut.result()
            except AnchorLabError as e:
                errors[name] = str(e)
    index = []
    for c in cfgs:
        r = reports.get(c.name)
        index.append({
            "name": c.name,
            "csv": r.csv_path if r else None,
            "report": os.path.join(c.output.dir, c.output.report) if r else None,
            "passed": r.passed if r else False,
            "error": errors.get(c.name),
        })
    index_dir = index_dir or (cfgs[0].output.dir if cfgs else ".")
    index_path = os.path.join(index_dir, "index.json")
    write_json_atomic(index_path, index)
    return [reports[c.name] for c in cfgs if c.name in reports], index_path
