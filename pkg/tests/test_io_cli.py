import json
import shutil
import subprocess

import numpy as np
import pytest

from mixgraph.boundary import BoundaryConditions, presets, random_bc, report
from mixgraph.cli import main
from mixgraph.errors import ParseError
from mixgraph.expr import parse, parse_complex
from mixgraph.graph import EdgeFunction, MetricGraph
from mixgraph.io import dumps_bc, dumps_edge_function, dumps_graph, loads_bc, loads_edge_function, loads_graph


# --- expressions -------------------------------------------------------------------

def test_expression_values():
    x = np.linspace(0, 1, 5)
    np.testing.assert_allclose(parse("sin(pi*x)^2 + 3")(x), np.sin(np.pi * x) ** 2 + 3)
    np.testing.assert_allclose(parse("exp(-t)")(t=x), np.exp(-x))
    np.testing.assert_allclose(parse("theta + 1")(t=x), x + 1)
    np.testing.assert_allclose(parse("2")(x), 2)


def test_imaginary_literals():
    assert parse_complex("0.5-2i") == 0.5 - 2j
    assert parse_complex("1.5e-3i") == 1.5e-3j
    assert parse_complex("-sqrt(2)") == pytest.approx(-np.sqrt(2))
    assert parse_complex("sqrt(-4)") == pytest.approx(2j)
    assert parse_complex("2*i") == 2j


@pytest.mark.parametrize(
    "src, where",
    [("x +", "1:"), ("foo(x)", "1:1"), ("x + y", "1:5"), ("'a'", "1:1"), ("x if x else 1", "1:1"), ("x % 2", "1:1"),
     ("sin(x, x)", "1:1")],
)
def test_parse_errors_report_position(src, where):
    with pytest.raises(ParseError, match="parse-error") as exc:
        parse(src)
    assert where in str(exc.value)


def test_unbound_variable():
    with pytest.raises(ParseError, match="not bound"):
        parse("x + t")(np.zeros(3))


# --- files -------------------------------------------------------------------------

def test_graph_round_trip():
    for g in (MetricGraph((1.0, 0.25), (3.0,)),
              MetricGraph((1.0,), (2.0,), ("v", "w"), (("v", "w"), ("w", "v")))):
        assert loads_graph(dumps_graph(g)) == g


def test_bc_round_trip(rng):
    for D, T in ((1, 1), (2, 1), (0, 2)):
        bc = random_bc(D, T, rng)
        back = loads_bc(dumps_bc(bc), (D, T))
        np.testing.assert_array_equal(back.P, bc.P)
        np.testing.assert_array_equal(back.L, bc.L)


def test_bc_file_needs_both_matrices():
    with pytest.raises(ParseError, match="parse-error"):
        loads_bc("P = [[0.0]]\n", (0, 1))
    with pytest.raises(ParseError, match="parse-error"):
        loads_bc("P = [[0.0, 1]\n", (0, 1))


def test_edge_function_round_trip_is_bit_identical(rng):
    g = MetricGraph((1.0, 0.7), (1.3,))
    u = EdgeFunction(g, [rng.standard_normal(m + 1) + 1j * rng.standard_normal(m + 1) for m in (8, 11, 5)])
    text = dumps_edge_function(u)
    back = loads_edge_function(text, g)
    for a, b in zip(u.values, back.values):
        np.testing.assert_array_equal(a, b)
    assert dumps_edge_function(back) == text


def test_edge_function_csv_errors():
    with pytest.raises(ParseError, match="expected header"):
        loads_edge_function("a,b\n")
    g = MetricGraph((1.0,), ())
    good = dumps_edge_function(EdgeFunction.zeros(g, 4))
    lines = good.splitlines()
    lines[2] = lines[2] + ",9"
    with pytest.raises(ParseError, match="3:1"):
        loads_edge_function("\n".join(lines) + "\n")


# --- command line ------------------------------------------------------------------

def _json_out(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_validate_preset(tmp_path, capsys):
    assert main(["validate", "--preset", "dendrite-bdprime", "--out-dir", str(tmp_path)]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(out["omega_tilde"]) == pytest.approx(3.0)
    assert json.loads((tmp_path / "validate.json").read_text())["maincond_feasible"] is True


def test_validate_rejects_non_projector(tmp_path, capsys):
    g = MetricGraph((1.0,), (1.0,))
    bc = BoundaryConditions(np.diag([2.0, 0, 0]), np.zeros((3, 3)), (1, 1))
    (tmp_path / "g.toml").write_text(dumps_graph(g))
    (tmp_path / "bc.toml").write_text(dumps_bc(bc))
    code = main(["validate", "--graph", str(tmp_path / "g.toml"), "--bc", str(tmp_path / "bc.toml")])
    assert code == 2
    assert "P²≠P" in capsys.readouterr().err


def test_unknown_preset_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["validate", "--preset", "nope"])
    assert exc.value.code == 2


def test_missing_input(capsys):
    assert main(["validate"]) == 2
    assert "missing-input" in capsys.readouterr().err


def test_spectrum_dirichlet(tmp_path):
    assert main(["spectrum", "--preset", "dirichlet", "--region", "-1,10,-1,1", "--out-dir", str(tmp_path)]) == 0
    rows = np.loadtxt(tmp_path / "spectrum.csv", delimiter=",", skiprows=1, ndmin=2)
    np.testing.assert_allclose(np.sort(rows[:, 0])[::-1], -(np.pi * np.arange(1, 4)) ** 2, atol=1e-8)


def test_spectrum_invalid_region(capsys):
    assert main(["spectrum", "--preset", "dirichlet", "--region", "3,1,0,1"]) == 2
    assert "invalid-region" in capsys.readouterr().err


def test_resolve(tmp_path, capsys):
    code = main(["resolve", "--preset", "dendrite-bdprime", "--lambda", "2+i", "--u0", "cos(x)",
                 "--n-per-edge", "50", "--out-dir", str(tmp_path)])
    assert code == 0
    meta = _json_out(capsys)
    assert meta["boundary_residual"] < 1e-2
    assert (tmp_path / "resolvent.csv").exists()


def test_resolve_needs_one_spectral_parameter(capsys):
    assert main(["resolve", "--preset", "dirichlet"]) == 2
    assert main(["resolve", "--preset", "dirichlet", "--lambda", "pi^2", "--k", "1"]) == 2


def test_resolve_in_spectrum(capsys):
    assert main(["resolve", "--preset", "dirichlet", "--k", "pi"]) == 2
    assert "lambda-in-spectrum" in capsys.readouterr().err


def test_evolve(tmp_path, capsys):
    code = main(["evolve", "--preset", "dirichlet", "--u0", "sin(pi*x)", "--t-end", "0.1", "--dt", "0.01",
                 "--n-per-edge", "50", "--scheme", "cn", "--snapshot-times", "0.05", "--out-dir", str(tmp_path)])
    assert code == 0
    summary = _json_out(capsys)
    assert summary["final_l2"] == pytest.approx(np.exp(-np.pi**2 * 0.1) / np.sqrt(2), rel=1e-2)
    names = sorted(p.name for p in tmp_path.glob("snapshot_*.csv"))
    assert len(names) == 2


def test_evolve_bad_option(capsys):
    assert main(["evolve", "--preset", "dirichlet", "--dt", "-0.1"]) == 2
    assert "bad-option" in capsys.readouterr().err


def test_delay_compare(tmp_path, capsys):
    code = main(["delay-compare", "--tau", "0.5", "--history", "cos(t)", "--f1", "0", "--f2", "0",
                 "--t-end", "1", "--dt", "0.01", "--n-per-edge", "20", "--levels", "2", "--out-dir", str(tmp_path)])
    assert code == 0
    summary = _json_out(capsys)
    assert set(summary) >= {"sup_difference", "relative_difference", "orders"}
    assert (tmp_path / "delay_convergence.csv").exists()


def test_delay_grid_mismatch_cli(capsys):
    assert main(["delay-compare", "--tau", "1", "--dt", "0.3", "--t-end", "0.9"]) == 2
    assert "delay-grid-mismatch" in capsys.readouterr().err


def test_parse_error_in_u0(capsys):
    assert main(["evolve", "--preset", "dirichlet", "--u0", "sin(x"]) == 2
    assert "parse-error" in capsys.readouterr().err


def test_outputs_are_deterministic(tmp_path):
    args = ["evolve", "--preset", "dendrite-bdprime", "--u0", "cos(x)", "--t-end", "0.05", "--dt", "0.01",
            "--n-per-edge", "30"]
    for d in ("a", "b"):
        assert main(args + ["--out-dir", str(tmp_path / d)]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


@pytest.mark.skipif(shutil.which("mixgraph") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["mixgraph", "validate", "--preset", "dirichlet", "--out-dir", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "neg_L_dissipative = True" in res.stdout


def test_presets_parameters_from_cli(tmp_path, capsys):
    code = main(["validate", "--preset", "dendrite-bdprime", "--param", "lengths=0.2,0.3,0.5", "--out-dir", str(tmp_path)])
    assert code == 0
    g, bc = presets("dendrite-bdprime", lengths=(0.2, 0.3, 0.5))
    rep = json.loads((tmp_path / "validate.json").read_text())
    assert rep["trace_constant"] == pytest.approx(report(bc, g).trace_constant)
    g0, bc0 = presets("dendrite-bdprime")
    assert rep["trace_constant"] != pytest.approx(report(bc0, g0).trace_constant)
