#!/usr/bin/env python3
# app/cli.py
from __future__ import annotations

import csv
import json
import os
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
load_dotenv()  # carrega .env da raiz

from core import ode
from core.errors import AnchorLabError, ConfigError, ParameterError, ParseError
from core.family import certify, lambdas_positive, make_pvector, named_pvector, synthesize
from core.hduality import named_certificate, named_weights, psd_margin, verify_duality
from core.hmatrix import anti_transpose, named_hmatrix, to_csv, to_dump
from core.operators import as_monotone, known_solution, make_problem
from core.orchestrator import initial_point, plot, preset_config, run_batch, run_experiment
from core.schemas import ODE_METHODS, ExperimentConfig, ProblemSpec, load_config, unknown_name_message
from core.validators import apply_scale, problem_params, validate

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
VERIFY_METHODS = ("OHM", "DualOHM", "family")
DUALITY_TOL = 1e-9
STRUCTURE_TOL = 1e-14


# ---------------- utils ----------------
def usage_and_exit() -> None:
    print(
        "Uso:\n"
        "  python -m app.cli run --config=exp.toml [--config=outro.json ...] [--preset=fig1a] [--seed=N] [--out=dir] [--scale=f] [--jobs=n]\n"
        "  python -m app.cli synthesize --N=n (--gamma=g | --p=p1,p2,...) [--out=H.csv]\n"
        "  python -m app.cli verify --method=OHM|DualOHM|family --N=n [--gamma=g]\n"
        "  python -m app.cli ode --model=anchor|dual-anchor|dual-anchor-yosida --T=t --steps=n --problem=kind [--params=JSON] [--seed=N] [--out=traj.csv]\n"
        "  python -m app.cli plot trace.csv [--out=dir]\n"
        "Obs.: saída 0 = tudo ok; 1 = cota/certificado violado; 2 = erro de configuração.",
        file=sys.stderr,
    )
    sys.exit(EXIT_CONFIG)


def parse_jobs(argv: List[str]) -> int:
    for a in argv:
        if a.startswith("--jobs="):
            try:
                return max(1, int(a.split("=", 1)[1]))
            except Exception:
                pass
    return int(os.getenv("CLI_JOBS", "1"))


def flag_values(argv: List[str], name: str) -> List[str]:
    """Todas as ocorrências de --name=v ou --name v."""
    out: List[str] = []
    key = f"--{name}"
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith(key + "="):
            out.append(a.split("=", 1)[1])
        elif a == key:
            if i + 1 >= len(argv):
                raise ConfigError(f"{key} exige um valor")
            out.append(argv[i + 1])
            i += 1
        i += 1
    return out


def flag(argv: List[str], name: str, default: Optional[str] = None) -> Optional[str]:
    vals = flag_values(argv, name)
    return vals[-1] if vals else default


def _num(argv: List[str], name: str, cast, default=None, required: bool = False):
    raw = flag(argv, name)
    if raw is None:
        if required:
            raise ConfigError(f"--{name} é obrigatório")
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"--{name}: valor inválido '{raw}'") from None


def positional(argv: List[str]) -> List[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a.startswith("--"):
            skip = "=" not in a and a not in ("--plot",)
            continue
        out.append(a)
    return out


def emit(data: Any) -> None:
    print(json.dumps(data, ensure_ascii=False, indent=2))


# ---------------- run ----------------
def cmd_run(argv: List[str]) -> int:
    cfgs: List[ExperimentConfig] = []
    for path in flag_values(argv, "config"):
        if not os.path.isfile(path):
            raise ConfigError(f"config não encontrado: {path}")
        cfgs.append(load_config(path))
    out_dir = flag(argv, "out")
    for name in flag_values(argv, "preset"):
        cfgs.append(preset_config(name, out_dir))
    if not cfgs:
        raise ConfigError("informe --config ou --preset")

    seed = _num(argv, "seed", int)
    scale = _num(argv, "scale", float)
    prepared: List[ExperimentConfig] = []
    for cfg in cfgs:
        cfg = cfg.model_copy(deep=True)
        if seed is not None:
            cfg.seed = seed
            cfg.problem.seed = seed
            cfg.problem.params.pop("seed", None)
        if scale is not None:
            cfg.scale = scale
        if out_dir:
            cfg.output.dir = out_dir
            if len(cfgs) > 1:
                cfg.output.csv = f"{cfg.name}.csv"
                cfg.output.report = f"{cfg.name}.json"
        if "--plot" in argv:
            cfg.output.plot = True
        prepared.append(apply_scale(cfg))

    jobs = parse_jobs(argv)
    if len(prepared) == 1:
        reports = [run_experiment(prepared[0])]
    else:
        reports, index_path = run_batch(prepared, jobs=jobs, index_dir=out_dir)
        print(f"[OK] índice: {index_path}", file=sys.stderr)
        if len(reports) < len(prepared):
            done = {r.name for r in reports}
            for c in prepared:
                if c.name not in done:
                    print(f"[ERRO] experimento '{c.name}' falhou (ver index.json)", file=sys.stderr)
            return EXIT_CONFIG

    failed = False
    for rep in reports:
        for c in rep.checks:
            if c.ok:
                continue
            tag = "[WARN]" if c.soft else "[ERRO]"
            print(f"{tag} {rep.name}/{c.method} {c.name}: {c.value!r} vs {c.bound!r} {c.detail}",
                  file=sys.stderr)
            failed = failed or not c.soft
        print(f"[OK] {rep.name}: {rep.csv_path} ({rep.wall_clock:.2f}s)", file=sys.stderr)
    emit([r.summary() for r in reports] if len(reports) > 1 else reports[0].summary())
    return EXIT_FAIL if failed else EXIT_OK


# ---------------- synthesize ----------------
def cmd_synthesize(argv: List[str]) -> int:
    N = _num(argv, "N", int, required=True)
    gamma = _num(argv, "gamma", float)
    p_raw = flag(argv, "p")
    if (gamma is None) == (p_raw is None):
        raise ConfigError("informe exatamente um de --gamma ou --p")
    if p_raw is not None:
        try:
            p = make_pvector([float(x) for x in p_raw.split(",") if x.strip()])
        except ValueError as e:
            raise ConfigError(f"--p inválido: {e}") from None
        if p.N != N:
            raise ConfigError(f"--p tem {len(p.p)} entradas; N={N} exige {N - 1}")
    else:
        p = named_pvector("interpolate", N, gamma)

    H = synthesize(p)
    cert = certify(H, p)
    out = flag(argv, "out")
    if out:
        to_csv(H, out)
        print(f"[OK] H salvo em {out}", file=sys.stderr)
    summary = cert.summary()
    summary["lambdas_positive"] = lambdas_positive(cert)
    emit({"hmatrix": to_dump(H), "certificate": summary})
    ok = cert.passed and summary["lambdas_positive"]
    if not ok:
        print(f"[ERRO] certificado reprovado: resíduo={cert.max_residual!r}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------- verify ----------------
def cmd_verify(argv: List[str]) -> int:
    method = flag(argv, "method", "")
    N = _num(argv, "N", int, required=True)
    by_key = {m.lower(): m for m in VERIFY_METHODS}
    key = method.replace("-", "").replace("_", "").lower()
    if key not in by_key:
        raise ConfigError(unknown_name_message("método", method, VERIFY_METHODS))
    method = by_key[key]

    report: Dict[str, Any] = {"method": method, "N": N}
    if method == "family":
        gamma = _num(argv, "gamma", float, 0.5)
        p = named_pvector("interpolate", N, gamma)
        H = synthesize(p)
        cert = certify(H, p)
        report.update(cert.summary())
        ok = cert.passed and lambdas_positive(cert)
    else:
        Q, psd = named_certificate(method, N)
        H_ohm = named_hmatrix("OHM", N)
        duality = verify_duality(H_ohm, named_weights("OHM", N))
        structure = float(abs(anti_transpose(H_ohm).entries - named_hmatrix("DualOHM", N).entries).max())
        report.update({
            "psd": psd,
            "min_eig": psd_margin(Q),
            "duality": duality.summary(),
            "anti_transpose_error": structure,
        })
        ok = psd and duality.discrepancy <= DUALITY_TOL and duality.sign_agrees \
            and structure <= STRUCTURE_TOL
    report["passed"] = ok = bool(ok)
    emit(report)
    print(f"[{'OK' if ok else 'ERRO'}] verify {method} N={N}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------- ode ----------------
def cmd_ode(argv: List[str]) -> int:
    model = (flag(argv, "model") or "").strip().lower()
    if model not in ODE_METHODS:
        raise ConfigError(unknown_name_message("modelo", model, ODE_METHODS))
    T = _num(argv, "T", float, required=True)
    steps = _num(argv, "steps", int, 1000)
    kind = flag(argv, "problem")
    if not kind:
        raise ConfigError("--problem é obrigatório")
    try:
        params = json.loads(flag(argv, "params", "{}"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"--params: JSON inválido: {e}") from None
    seed = _num(argv, "seed", int, 0)
    delta = _num(argv, "delta", float, 1e-2)
    scale = _num(argv, "scale", float, 1.0)

    cfg = ExperimentConfig(problem=ProblemSpec(kind=kind, params=params, seed=seed),
                           methods=[model], T=T, steps=steps, seed=seed, scale=scale,
                           yosida_delta=delta)
    cfg = apply_scale(cfg)
    validate(cfg)
    P = make_problem(cfg.problem.kind, **problem_params(cfg))
    x0 = initial_point(cfg, as_monotone(P).dim)
    if model == "anchor":
        traj = ode.integrate_anchor(P, x0, cfg.T, cfg.steps)
    elif model == "dual-anchor":
        traj = ode.integrate_dual_anchor(P, x0, cfg.T, cfg.steps)
    else:
        traj = ode.integrate_dual_anchor_yosida(P, cfg.yosida_delta, x0, cfg.T, cfg.steps)

    out = flag(argv, "out", os.path.join("outputs", f"{model}.csv"))
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(ode.csv_header(traj))
        w.writerows([[repr(v) for v in row] for row in ode.to_rows(traj)])
    print(f"[OK] trajetória salva em {out}", file=sys.stderr)

    ok = True
    summary: Dict[str, Any] = {"model": model, "T": cfg.T, "steps": cfg.steps, "csv": out,
                               "terminal": traj.terminal.tolist(),
                               "flags": {k: v for k, v in traj.flags.items()}}
    if model != "anchor":
        viol = int(traj.flags.get("V_violations", 0)) + int(traj.flags.get("Psi_violations", 0))
        ok = viol == 0
        if not ok:
            print(f"[ERRO] V(t)/Ψ(t) cresceram em {viol} pontos", file=sys.stderr)
    x_star = known_solution(P)
    if x_star is not None and model == "dual-anchor":
        rc = ode.rate_check(traj, P, x_star)
        summary["rate_check"] = rc
        ok = ok and bool(rc["ok"])
    emit(summary)
    return EXIT_OK if ok else EXIT_FAIL


# ---------------- plot ----------------
def cmd_plot(argv: List[str]) -> int:
    args = positional(argv)
    if not args:
        raise ConfigError("informe o CSV de entrada")
    path = args[0]
    if not os.path.isfile(path):
        print(f"[ERRO] CSV não encontrado: {path}", file=sys.stderr)
        return EXIT_CONFIG
    paths = plot(path, flag(argv, "out"))
    for p in paths:
        print(f"[OK] {p}", file=sys.stderr)
    emit(paths)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "synthesize": cmd_synthesize,
    "verify": cmd_verify,
    "ode": cmd_ode,
    "plot": cmd_plot,
}


# ---------------- main ----------------
def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        usage_and_exit()
    cmd = COMMANDS.get(argv[0])
    if cmd is None:
        print(f"[ERRO] {unknown_name_message('subcomando', argv[0], list(COMMANDS))}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return cmd(argv[1:])
    except (ConfigError, ParameterError, ParseError) as e:
        print(f"[ERRO] {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AnchorLabError as e:
        print(f"[ERRO] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as e:
        print(f"[ERRO] {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
