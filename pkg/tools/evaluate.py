#!/usr/bin/env python3
from __future__ import annotations
import csv, os, sys, tempfile, time
from pathlib import Path
from typing import Callable, Dict, List, Tuple
import argparse

import numpy as np

from core import fixedpoint as fp
from core import minimax as mm
from core import ode
from core.family import (
    certify, column_sum_identity_gap, lambdas_positive, make_pvector, n3_closed_form, named_pvector,
    pvector_of, synthesize,
)
from core.hduality import make_weights, named_certificate, psd_margin, verify_duality
from core.hmatrix import (
    anti_transpose, hmatrix, named_gradient_hmatrix, named_hmatrix, run_fp_hmatrix, run_grad_hmatrix,
)
from core.operators import NonexpansiveMap, make_problem, nonexpansive_from_monotone
from core.orchestrator import preset_config, run_experiment

# ---------- parâmetros (ENV) --------------------------------------------------
FORM_TOL       = float(os.getenv("FORM_TOL", "1e-10"))
BOUND_SLACK    = float(os.getenv("BOUND_SLACK", "1e-9"))
STRUCT_TOL     = float(os.getenv("STRUCT_TOL", "1e-14"))
CERT_TOL       = float(os.getenv("CERT_TOL", "1e-8"))
DUALITY_TOL    = float(os.getenv("DUALITY_TOL", "1e-10"))
LINEAR_TOL     = float(os.getenv("LINEAR_TOL", "1e-8"))
NONLINEAR_MIN  = float(os.getenv("NONLINEAR_MIN", "1e-6"))
FAIL_ON_CHECK  = os.getenv("FAIL_ON_CHECK", "1") == "1"       # exit 1 se algum critério falhar
SHOW_TOP_N     = int(os.getenv("SHOW_TOP_N", "3"))

Row = Tuple[str, float, float, bool]          # (caso, valor, limiar, ok)


# ---------- utils -------------------------------------------------------------
def _resolve(p: str) -> Path:
    return Path(p).expanduser().resolve()

def instance(seed: int, d: int, shifted: bool = True):
    A = make_problem("random_linear_monotone", d=d, seed=seed, shifted=shifted)
    T = nonexpansive_from_monotone(A, 1.0)
    y0 = np.random.default_rng(10_000 + seed).standard_normal(d)
    return A, T, y0

def sizes(seed: int) -> Tuple[int, int]:
    rng = np.random.default_rng(seed)
    return int(rng.integers(1, 9)), int(rng.integers(2, 21))

def gap(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))

def minus_identity() -> NonexpansiveMap:
    return NonexpansiveMap(dim=1, name="-I", func=lambda y: -y, matrix=-np.eye(1),
                           known_fix=np.zeros(1))


# ---------- critérios ---------------------------------------------------------
def crit_forms(n: int) -> List[Row]:
    rows: List[Row] = []
    for s in range(n):
        d, N = sizes(s)
        A, T, y0 = instance(s, d)
        scale = 1.0 + float(np.linalg.norm(y0))
        ohm = fp.run_ohm(T, y0, N).iterates
        rows.append((f"ohm/momentum s={s}", gap(ohm, fp.run_ohm(T, y0, N, form="momentum").iterates), FORM_TOL * scale, True))
        rows.append((f"ohm/hmatrix s={s}", gap(ohm, fp.run_ohm(T, y0, N, form="hmatrix").iterates), FORM_TOL * scale, True))
        rows.append((f"ohm/appm s={s}", gap(ohm, fp.run_proximal_form("appm", A, y0, N).iterates), FORM_TOL * scale, True))
        dual = fp.run_dual_ohm(T, y0, N, check_forms=False).iterates
        rows.append((f"dual-ohm/momentum s={s}", gap(dual, fp.run_dual_ohm(T, y0, N, form="momentum", check_forms=False).iterates), FORM_TOL * scale, True))
        rows.append((f"dual-ohm/hmatrix s={s}", gap(dual, fp.run_dual_ohm(T, y0, N, form="hmatrix", check_forms=False).iterates), FORM_TOL * scale, True))
        rows.append((f"dual-ohm/prox s={s}", gap(dual, fp.run_proximal_form("dual-ohm-prox", A, y0, N).iterates), FORM_TOL * scale, True))
        L = float(A.lipschitz)
        for kind, H in (("feg", "FEG"), ("dual-feg", "DualFEG")):
            direct = mm.run(kind, A, y0, 1.0 / L, N).iterates
            via_h = run_grad_hmatrix(named_gradient_hmatrix(H, N, 1.0), A, y0, L).iterates
            rows.append((f"{kind}/hmatrix s={s}", gap(direct, via_h), FORM_TOL * scale, True))
    return [(c, v, t, v <= t) for c, v, t, _ in rows]


def crit_rates(n: int) -> List[Row]:
    rows: List[Row] = []
    for s in range(n):
        d, N = sizes(s)
        A, T, y0 = instance(s, d)
        d2 = float((y0 - A.known_zero) @ (y0 - A.known_zero))
        res = fp.run_ohm(T, y0, N).metrics["residual_sq"]
        worst = max(r - fp.rate_bound(d2, k) for k, r in enumerate(res) if k >= 1)
        rows.append((f"ohm s={s}", worst, BOUND_SLACK, worst <= BOUND_SLACK))
        term = fp.run_dual_ohm(T, y0, N).metrics["residual_sq"][-1] - fp.rate_bound(d2, N)
        rows.append((f"dual-ohm s={s}", term, BOUND_SLACK, term <= BOUND_SLACK))
    tight = fp.run_dual_ohm(minus_identity(), np.ones(1), 3).metrics["residual_sq"][-1]
    rows.append(("dual-ohm -I N=3 (=4/9)", abs(tight - 4.0 / 9.0), 1e-12, abs(tight - 4.0 / 9.0) <= 1e-12))
    return rows


def crit_structure(n_max: int) -> List[Row]:
    rows: List[Row] = []
    for N in range(2, n_max + 1):
        e = gap(anti_transpose(named_hmatrix("OHM", N)).entries, named_hmatrix("DualOHM", N).entries)
        rows.append((f"H_OHM^A N={N}", e, STRUCT_TOL, e <= STRUCT_TOL))
        e = gap(anti_transpose(named_gradient_hmatrix("FEG", N)).entries,
                named_gradient_hmatrix("DualFEG", N).entries)
        rows.append((f"H_FEG^A N={N}", e, STRUCT_TOL, e <= STRUCT_TOL))
    return rows


def crit_lyapunov(n: int) -> List[Row]:
    rows: List[Row] = []
    for s in range(n):
        d, N = sizes(s)
        A, T, y0 = instance(s, d)
        U = fp.lyapunov_series("U_ohm", A, fp.run_ohm(T, y0, N))
        rows.append((f"U_ohm s={s}", float(U.violations), 0.0, U.monotone))
        V = fp.lyapunov_series("V_dual_ohm", A, fp.run_dual_ohm(T, y0, N))
        rows.append((f"V_dual_ohm s={s}", abs(V.values[-1]), 1e-12 * (1 + abs(V.values[0])),
                     V.monotone and abs(V.values[-1]) <= 1e-12 * (1 + abs(V.values[0]))))
        tr = mm.run("dual-feg", A, y0, 1.0 / float(A.lipschitz), N)
        W = mm.dual_feg_lyapunov(A, tr)
        low = min(W.extras["MI"] + W.extras["LI"], default=0.0)
        rows.append((f"V_dual_feg s={s}", -low, 1e-10, W.monotone and low >= -1e-10))
    return rows


def crit_family(n_max: int, per_N: int) -> Tuple[List[Row], List[str]]:
    rows: List[Row] = []
    notes: List[str] = []
    rng = np.random.default_rng(7)
    for N in range(3, n_max + 1):
        for i in range(per_N):
            gamma = float(rng.uniform(0.05, 0.95))
            p = named_pvector("interpolate", N, gamma)
            H = synthesize(p)
            cert = certify(H, p)
            ok = (cert.max_residual or 0.0) <= CERT_TOL and lambdas_positive(cert)
            A, T, y0 = instance(100 * N + i, int(rng.integers(1, 6)))
            d2 = float((y0 - A.known_zero) @ (y0 - A.known_zero))
            term = run_fp_hmatrix(H, T, y0).metrics["residual_sq"][-1] - fp.rate_bound(d2, N)
            rows.append((f"family N={N} γ={gamma:.3f}", max(cert.max_residual or 0.0, term),
                         CERT_TOL, ok and term <= BOUND_SLACK))
    for p2 in (0.55, 0.6, 0.65):
        E = synthesize(make_pvector([1.0 / 3.0, p2])).entries
        e = max(abs(E[0, 0] * E[1, 1] - 1.0 / 3.0), gap(E, n3_closed_form(p2)))
        rows.append((f"N=3 forma fechada p2={p2}", e, 1e-12, e <= 1e-12))
    for N in (3, 4, 8):
        for name, at in (("OHM", lambda t: 1.0 - t), ("DualOHM", lambda t: t)):
            target = named_hmatrix(name, N).entries
            e = gap(synthesize(named_pvector(name, N)).entries, target)
            rows.append((f"fronteira {name} N={N}", e, 1e-12, e <= 1e-12))
            d2, d3 = (gap(synthesize(named_pvector("interpolate", N, at(t))).entries, target) for t in (1e-2, 1e-3))
            ratio = d3 / d2 if d2 > 0.0 else 0.0
            rows.append((f"continuidade {name} N={N} (razão 1e-3/1e-2)", ratio, 0.15, ratio <= 0.15))
            notes.append(f"limite {name} N={N}: ‖ΔH‖∞ = {d3:.3e} no deslocamento 1e-3")
    return rows, notes


def crit_ode() -> List[Row]:
    rows: List[Row] = []
    P = make_problem("bilinear_uv")
    x0 = np.array([1.0, 0.0])
    for T in (2.0, 5.0):
        tr = ode.integrate_anchor(P, x0, T, 2000)
        val = tr.monitors["grad_norm_sq"][-1]
        rows.append((f"anchor T={T}", val, 4.0 / T ** 2, val <= 4.0 / T ** 2 * (1 + 1e-7)))
        dual = ode.integrate_dual_anchor(P, x0, T, 2000)
        rc = ode.rate_check(dual, P, np.zeros(2))
        rows.append((f"dual-anchor T={T}", rc["value"], rc["bound"] + rc["slack"], bool(rc["ok"])))
    M = np.array([[0.0, 1.0], [-1.0, 0.0]])
    tr = ode.integrate_anchor(P, x0, 10.0, 10_000)
    sup = max(float(np.linalg.norm(tr.X[i] - ode.anchor_closed_form(M, x0, float(tr.times[i]))))
              for i in range(100, 10_001, 100))
    rows.append(("anchor vs forma fechada (10^4 passos)", sup, 1e-6, sup <= 1e-6))
    dual = ode.integrate_dual_anchor(P, x0, 10.0, 10_000)
    viol = float(dual.flags["V_violations"] + dual.flags["Psi_violations"])
    rows.append(("V/Ψ monótonos (10^4 passos)", viol, 0.0, viol == 0.0))
    for s in range(5):
        A = make_problem("random_linear_monotone", d=3, seed=s, mu=0.1)
        sd = ode.strong_decay_check(ode.integrate_dual_anchor(A, np.ones(3), 5.0, 2000), A, 0.1)
        rows.append((f"decaimento μ=0.1 s={s}", sd["max_excess"], 0.0, bool(sd["ok"])))
    seq = ode.yosida_sequence(P, x0, 2.0, 500)
    worst = max(seq["ratios"], default=0.0)
    rows.append(("Yosida Cauchy", worst, 1.0, bool(seq["cauchy"])))
    return rows


def crit_duality(n: int, n_max: int) -> List[Row]:
    rows: List[Row] = []
    for s in range(n):
        rng = np.random.default_rng(20_000 + s)
        N = int(rng.integers(2, 9))
        H = hmatrix(np.tril(rng.standard_normal((N - 1, N - 1))))
        u = make_weights(rng.uniform(0.2, 3.0, N - 1).tolist(), tau=float(rng.uniform(0.5, 4.0)))
        rep = verify_duality(H, u, trials=4, seed=s)
        rows.append((f"S=T∘F s={s}", rep.discrepancy, DUALITY_TOL, rep.discrepancy <= DUALITY_TOL))
        rows.append((f"sinal λmin s={s}", min(rep.min_eig_primal, rep.min_eig_dual), 0.0, rep.sign_agrees))
    for N in range(2, n_max + 1):
        for kind in ("OHM", "DualOHM"):
            Q, _ = named_certificate(kind, N)
            m = psd_margin(Q)
            rows.append((f"certificado {kind} N={N}", -m, 1e-9, m >= -1e-9))
    return rows


def crit_terminal_identity() -> List[Row]:
    rows: List[Row] = []
    cases = (("bilinear_uv", {}, np.array([1.0, 0.0]), 0.5),
             ("ouyang_xu", {"n": 50}, np.zeros(100), 1.0))
    for kind, params, x0, alpha in cases:
        P = make_problem(kind, **params)
        for N in (100, 2000):
            e = mm.terminal_match_linear(P, x0, alpha, N)
            rows.append((f"{kind} N={N}", e, LINEAR_TOL, e <= LINEAR_TOL))
    P = make_problem("u_squared_v")
    for N in (500, 1000):
        e = mm.terminal_gap(P, [-1.0, 1.0], 0.05, N)
        rows.append((f"u²v N={N} (deve diferir)", e, NONLINEAR_MIN, e > NONLINEAR_MIN))
    return rows


def crit_fig2a() -> List[Row]:
    rows: List[Row] = []
    with tempfile.TemporaryDirectory() as tmp:
        reps = [run_experiment(preset_config("fig2a", os.path.join(tmp, f"r{i}"))) for i in range(2)]
        rep = reps[0]
        for c in rep.checks:
            if c.name == "bound":
                excess = (c.value or 0.0) - (c.bound or 0.0)
                rows.append((f"cota {c.method}", excess, 0.0, c.ok))
        a = rep.series["feg"]["grad_norm_sq"][-1]
        b = rep.series["dual-feg"]["grad_norm_sq"][-1]
        rel = abs(a - b) / max(abs(a), 1e-300)
        rows.append(("terminal feg vs dual-feg", rel, 1e-6, rel <= 1e-6))
        same = Path(reps[0].csv_path).read_bytes() == Path(reps[1].csv_path).read_bytes()
        rows.append(("CSV idêntico entre execuções", float(not same), 0.0, same))
    return rows


def crit_composed(n: int) -> List[Row]:
    rows: List[Row] = []
    for s in range(n):
        d, N = sizes(s)
        N = max(N, 3)
        Nprime = int(np.random.default_rng(30_000 + s).integers(2, N))
        A, T, y0 = instance(s, d)
        d2 = float((y0 - A.known_zero) @ (y0 - A.known_zero))
        term = fp.run_composed(T, y0, N, Nprime).metrics["residual_sq"][-1] - fp.rate_bound(d2, N)
        rows.append((f"composto N={N} N'={Nprime} s={s}", term, BOUND_SLACK, term <= BOUND_SLACK))
    H = fp.composed_hmatrix(4, 3)
    g = abs(column_sum_identity_gap(H, pvector_of(H)))
    rows.append(("composto fora da família (gap soma-coluna)", g, CERT_TOL, g > CERT_TOL))
    p = named_pvector("interpolate", 4, 0.5)
    g = abs(column_sum_identity_gap(synthesize(p), p))
    rows.append(("controle: membro da família", g, CERT_TOL, g <= CERT_TOL))
    return rows


# ---------- benchmark ---------------------------------------------------------
def run_benchmark(instances: int = 50, verbose: bool = False, csv_out: str | None = None) -> int:
    suites: Dict[str, Callable[[], List[Row]]] = {
        "formas equivalentes": lambda: crit_forms(instances),
        "cotas exatas": lambda: crit_rates(2 * instances),
        "estrutura H-dual": lambda: crit_structure(30),
        "certificados de Lyapunov": lambda: crit_lyapunov(2 * instances),
        "família ótima": lambda: _family_rows(verbose),
        "teorema de H-dualidade": lambda: crit_duality(2 * instances, 30),
        "iterado terminal linear": crit_terminal_identity,
        "EDOs": crit_ode,
        "reprodução fig2a": crit_fig2a,
        "algoritmo composto": lambda: crit_composed(instances),
    }
    results: Dict[str, Tuple[List[Row], float]] = {}
    for name, fn in suites.items():
        tic = time.perf_counter()
        try:
            rows = fn()
        except Exception as e:
            print(f"[ERRO] critério '{name}' falhou: {e}")
            rows = [(name, float("nan"), 0.0, False)]
        results[name] = (rows, time.perf_counter() - tic)

    print("\n=== RESULTADOS ===")
    failed = 0
    for name, (rows, secs) in results.items():
        bad = [r for r in rows if not r[3]]
        failed += bool(bad)
        tag = "OK" if not bad else "FAIL"
        print(f"- {name}: {tag} ({len(rows) - len(bad)}/{len(rows)}) em {secs:.2f}s")
        worst = sorted(rows, key=lambda r: (r[3], -(r[1] - r[2]) if np.isfinite(r[1]) else 0.0))[:SHOW_TOP_N]
        if verbose or bad:
            for c, v, t, ok in worst:
                print(f"  · {c}: {v:.3e} (limiar {t:.1e}) {'OK' if ok else 'FAIL'}")

    if csv_out:
        outp = _resolve(csv_out)
        outp.parent.mkdir(parents=True, exist_ok=True)
        with outp.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["criterion", "case", "value", "threshold", "ok"])
            for name, (rows, _) in results.items():
                for c, v, t, ok in rows:
                    w.writerow([name, c, repr(float(v)), repr(float(t)), int(ok)])
        print(f"\n[OK] CSV salvo em: {outp}")

    print("\n=== METAS ===")
    print(f"- Critérios aprovados: {len(results) - failed}/{len(results)}")
    return 1 if (FAIL_ON_CHECK and failed) else 0


def _family_rows(verbose: bool) -> List[Row]:
    rows, notes = crit_family(15, 4)
    if verbose:
        for n in notes:
            print(f"[INFO] {n}")
    return rows


# ---------- CLI ---------------------------------------------------------------
if __name__ == "__main__":
    p = argparse.ArgumentParser()
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--verbose", action="store_true")
    p.add_argument("--csv", help="Caminho do CSV de saída (opcional)")
    args = p.parse_args()

    rc = run_benchmark(args.instances, verbose=args.verbose, csv_out=args.csv)
    sys.exit(rc)
