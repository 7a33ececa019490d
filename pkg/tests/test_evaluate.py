import pytest

from tools import evaluate as ev


def failing(rows):
    return [r for r in rows if not r[3]]


def test_duality_rows(monkeypatch):
    monkeypatch.setattr(ev, "DUALITY_TOL", 1e-8)
    rows = ev.crit_duality(6, 8)
    assert not failing(rows)
    assert sum(1 for r in rows if r[0].startswith("certificado")) == 2 * 7


def test_terminal_identity_rows():
    rows = ev.crit_terminal_identity()
    assert not failing(rows)
    assert any(r[0].startswith("u²v") for r in rows)


def test_composed_rows_include_controls():
    rows = ev.crit_composed(5)
    assert not failing(rows)
    names = [r[0] for r in rows]
    assert "composto fora da família (gap soma-coluna)" in names
    assert "controle: membro da família" in names


def test_family_boundary_rows_are_checked():
    rows, notes = ev.crit_family(4, 1)
    boundary = [r for r in rows if r[0].startswith(("fronteira", "continuidade"))]
    assert len(boundary) == 12
    assert not failing(boundary)
    assert len(notes) == 6


@pytest.mark.parametrize("name", ["formas equivalentes", "algoritmo composto"])
def test_benchmark_writes_csv(tmp_path, name, monkeypatch):
    called = {}

    def only(self_name):
        def fn(*args, **kwargs):
            called[self_name] = True
            return [("x", 0.0, 1.0, True)]
        return fn

    for attr in ("crit_forms", "crit_rates", "crit_structure", "crit_lyapunov", "crit_duality",
                 "crit_terminal_identity", "crit_ode", "crit_fig2a", "crit_composed"):
        monkeypatch.setattr(ev, attr, only(attr))
    monkeypatch.setattr(ev, "_family_rows", only("_family_rows"))
    out = tmp_path / "bench.csv"
    assert ev.run_benchmark(2, csv_out=str(out)) == 0
    text = out.read_text(encoding="utf-8")
    assert text.splitlines()[0] == "criterion,case,value,threshold,ok"
    assert name in text
    assert len(called) == 10
