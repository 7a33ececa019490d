import json

import pytest

from app.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, flag_values, main, positional
from core.errors import ConfigError


def stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_flag_forms():
    argv = ["--config=a.toml", "--config", "b.json", "--N", "3"]
    assert flag_values(argv, "config") == ["a.toml", "b.json"]
    assert flag_values(argv, "N") == ["3"]
    with pytest.raises(ConfigError):
        flag_values(["--out"], "out")
    assert positional(["x.csv", "--out", "d", "--plot", "y.csv"]) == ["x.csv", "y.csv"]


def test_synthesize_with_gamma(capsys, tmp_path):
    out = tmp_path / "H.csv"
    assert main(["synthesize", "--N=5", "--gamma=0.5", f"--out={out}"]) == EXIT_OK
    data = stdout_json(capsys)
    assert data["hmatrix"]["n"] == 4
    assert data["certificate"]["passed"] is True
    assert out.exists()


def test_synthesize_with_p(capsys):
    assert main(["synthesize", "--N", "3", "--p", "0.3333333333333333,0.6"]) == EXIT_OK
    rows = stdout_json(capsys)["hmatrix"]["lower"]
    assert rows[1][1] == pytest.approx(0.6)


@pytest.mark.parametrize("argv", [
    ["synthesize", "--N=5"],
    ["synthesize", "--N=5", "--gamma=0.5", "--p=0.2,0.4,0.6,0.8"],
    ["synthesize", "--N=4", "--p=0.3,0.5,0.7"],
    ["synthesize", "--N=4", "--p=0.25,0.5"],
    ["synthesize", "--N=x", "--gamma=0.5"],
])
def test_synthesize_errors(argv):
    assert main(argv) == EXIT_CONFIG


@pytest.mark.parametrize("method", ["OHM", "DualOHM", "family"])
def test_verify(method, capsys):
    assert main(["verify", f"--method={method}", "--N=6"]) == EXIT_OK
    assert stdout_json(capsys)["passed"] is True


def test_verify_unknown_method():
    assert main(["verify", "--method=APPM", "--N=6"]) == EXIT_CONFIG


def test_run_config_file(capsys, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"name": "cli", "problem": {"kind": "bilinear_uv"},
                               "methods": ["feg", "dual-feg"], "N": 20}), encoding="utf-8")
    out = tmp_path / "out"
    assert main(["run", f"--config={cfg}", f"--out={out}", "--seed=3"]) == EXIT_OK
    summary = stdout_json(capsys)
    assert summary["passed"] is True and summary["seed"] == 3
    assert (out / "trace.csv").exists()
    assert (out / "report.json").exists()


def test_run_batch_with_preset(capsys, tmp_path):
    cfg = tmp_path / "exp.toml"
    cfg.write_text('name = "cli2"\nmethods = ["eg"]\nN = 10\n\n[problem]\nkind = "bilinear_uv"\n', encoding="utf-8")
    out = tmp_path / "out"
    argv = ["run", f"--config={cfg}", "--preset=fig1a", f"--out={out}", "--scale=0.01", "--jobs=2"]
    assert main(argv) == EXIT_OK
    assert len(stdout_json(capsys)) == 2
    index = json.loads((out / "index.json").read_text(encoding="utf-8"))
    assert [e["name"] for e in index] == ["cli2", "fig1a"]
    assert (out / "fig1a.csv").exists()
    assert (out / "cli2.csv").exists()


def test_run_errors(tmp_path):
    assert main(["run"]) == EXIT_CONFIG
    assert main(["run", f"--config={tmp_path / 'missing.toml'}"]) == EXIT_CONFIG
    assert main(["run", "--preset=fig7"]) == EXIT_CONFIG


def test_ode_writes_trajectory(capsys, tmp_path):
    out = tmp_path / "dual.csv"
    argv = ["ode", "--model=dual-anchor", "--T=2", "--steps=400", "--problem=bilinear_uv", f"--out={out}"]
    assert main(argv) == EXIT_OK
    summary = stdout_json(capsys)
    assert summary["rate_check"]["ok"] is True
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0].split(",")[:3] == ["t", "x0", "x1"]
    assert len(lines) == 402


def test_ode_errors():
    assert main(["ode", "--model=anchr", "--T=1", "--problem=bilinear_uv"]) == EXIT_CONFIG
    assert main(["ode", "--model=anchor", "--problem=bilinear_uv"]) == EXIT_CONFIG
    assert main(["ode", "--model=anchor", "--T=1", "--problem=u_squared_v"]) == EXIT_CONFIG
    assert main(["ode", "--model=anchor", "--T=1", "--problem=bilinear_uv", "--params={bad"]) == EXIT_CONFIG


def test_plot(capsys, tmp_path):
    csv_path = tmp_path / "trace.csv"
    csv_path.write_text("method,iter,metric,value\nfeg,0,grad_norm_sq,1.0\nfeg,1,grad_norm_sq,0.5\n",
                        encoding="utf-8")
    assert main(["plot", str(csv_path), "--out", str(tmp_path / "svg")]) == EXIT_OK
    assert stdout_json(capsys) == [str(tmp_path / "svg" / "trace_grad_norm_sq.svg")]
    assert main(["plot", str(tmp_path / "nope.csv")]) == EXIT_CONFIG
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n", encoding="utf-8")
    assert main(["plot", str(bad)]) == EXIT_CONFIG


def test_unknown_subcommand():
    assert main(["benchmark"]) == EXIT_CONFIG
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == EXIT_CONFIG


def test_exit_fail_is_distinct():
    assert EXIT_FAIL not in (EXIT_OK, EXIT_CONFIG)


def test_seed_flag_overrides_params_seed(capsys, tmp_path):
    base = {"name": "rs", "methods": ["ohm"], "N": 6}
    flagged = tmp_path / "flagged.json"
    flagged.write_text(json.dumps({**base, "problem": {"kind": "random_linear_monotone",
                                                       "params": {"d": 3, "seed": 1}}}), encoding="utf-8")
    plain = tmp_path / "plain.json"
    plain.write_text(json.dumps({**base, "problem": {"kind": "random_linear_monotone",
                                                     "params": {"d": 3}, "seed": 3}, "seed": 3}), encoding="utf-8")
    assert main(["run", f"--config={flagged}", f"--out={tmp_path / 'a'}", "--seed=3"]) == EXIT_OK
    assert main(["run", f"--config={plain}", f"--out={tmp_path / 'b'}"]) == EXIT_OK
    capsys.readouterr()
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "trace.csv").read_bytes()
    assert a == b
