from __future__ import annotations

import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from ohmic_cli.cli import app, main

P4_EDGES = "0 1 1\n1 2 1\n2 3 1\n"
T3_EDGES = "a b 1\nb c 1\na c 1\n"
LAZY_K2_EDGES = "a b 0.5\na a 0.5\nb b 0.5\n"

runner = CliRunner()


def _json(res) -> dict:
    assert res.exit_code == 0, res.output
    return json.loads(res.stdout)


def test_no_args_prints_help() -> None:
    res = runner.invoke(app, [])
    assert res.exit_code in (0, 2)
    assert "Commands" in res.output


def test_solve_reports_capacity(edge_file) -> None:
    net = edge_file(P4_EDGES)
    payload = _json(runner.invoke(app, ["solve", str(net), "--set", "A=0", "--set", "B=3"]))
    assert payload["schema_version"] == 1
    assert payload["command"] == "solve"
    result = payload["result"]
    assert result["capacity"] == pytest.approx(1 / 3)
    assert result["resistance"] == pytest.approx(3.0)
    assert result["potential"]["1"] == pytest.approx(2 / 3)
    assert result["expected_hitting_time"] == pytest.approx(9.0)


def test_solve_table_format(edge_file) -> None:
    net = edge_file(T3_EDGES)
    res = runner.invoke(app, ["solve", str(net), "--set", "A=a", "--set", "B=b", "--format", "table"])
    assert res.exit_code == 0
    assert "capacity" in res.stdout


def test_solve_writes_without_clobbering(edge_file, tmp_path: Path) -> None:
    net = edge_file(P4_EDGES)
    out = tmp_path / "solve.json"
    args = ["solve", str(net), "--set", "A=0", "--set", "B=3", "--out", str(out)]
    assert runner.invoke(app, args).exit_code == 0
    assert runner.invoke(app, args).exit_code == 0
    assert out.exists()
    assert (tmp_path / "solve (1).json").exists()
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["config"]["output"] == str(out)


def test_domain_errors_exit_two(edge_file) -> None:
    net = edge_file(P4_EDGES)
    res = runner.invoke(app, ["solve", str(net), "--set", "A=0", "--set", "B=9"])
    assert res.exit_code == 2
    res = runner.invoke(app, ["solve", str(net), "--set", "A=0,1", "--set", "B=1,3"])
    assert res.exit_code == 2
    bad = edge_file("0 1 -1\n", name="bad.txt")
    assert runner.invoke(app, ["solve", str(bad), "--set", "A=0", "--set", "B=1"]).exit_code == 2


def test_usage_errors_exit_one(edge_file) -> None:
    net = edge_file(P4_EDGES)
    assert runner.invoke(app, ["solve", str(net), "--set", "A=0"]).exit_code == 1
    assert runner.invoke(app, ["mc", "hitting", str(net), "--set", "A=0", "--set", "B=3", "--samples", "0"]).exit_code == 1
    assert main(["--bogus"]) == 1
    assert main(["solve"]) == 1


def test_bounds_with_certificates(edge_file) -> None:
    net = edge_file(P4_EDGES)
    pot = edge_file("0 1\n1 0.5\n2 0.5\n3 0\n", name="pot.txt")
    flow = edge_file("0 1 1\n1 2 1\n2 3 1\n", name="flow.txt")
    args = ["bounds", str(net), "--set", "A=0", "--set", "B=3", "--potential", str(pot), "--flow", str(flow)]
    result = _json(runner.invoke(app, args))["result"]
    assert result["capacity"] == pytest.approx(1 / 3)
    assert result["lower"] == pytest.approx(1 / 3)
    assert result["upper"] == pytest.approx(0.5)
    assert result["upper_gap"] == pytest.approx(0.5 - 1 / 3)


def test_spectral_on_lazy_pair(edge_file) -> None:
    net = edge_file(LAZY_K2_EDGES)
    args = ["spectral", str(net), "--scheme", "w1", "--scheme", "w3", "--mixing", "--set", "A=a", "--set", "B=b"]
    result = _json(runner.invoke(app, args))["result"]
    assert result["gap"] == pytest.approx(1.0)
    assert result["cheeger"]["constant"] == pytest.approx(0.5)
    assert [r["scheme"] for r in result["flow_poincare"]["bounds"]] == ["w1", "w3"]
    assert result["potential_gap_upper"] == pytest.approx(1.0)
    assert result["mixing"]["mixing_time"] == pytest.approx(0.3068528194, rel=1e-6)


def test_spectral_limits(edge_file) -> None:
    path21 = "".join(f"{i} {i + 1} 1\n" for i in range(20))
    net = edge_file(path21)
    assert runner.invoke(app, ["spectral", str(net)]).exit_code == 3
    assert runner.invoke(app, ["spectral", str(net), "--no-cheeger"]).exit_code == 0
    assert runner.invoke(app, ["spectral", str(net), "--scheme", "w7"]).exit_code == 1


def test_lattice_csv(tmp_path: Path) -> None:
    out = tmp_path / "lattice.csv"
    res = runner.invoke(app, ["lattice", "1", "3", "--threads", "2", "--out", str(out)])
    assert res.exit_code == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "d,n,capacity,upper_bound,lower_bound,wall_time_ms"
    assert len(lines) == 4
    cells = lines[1].split(",")
    assert cells[:2] == ["1", "1"]
    assert float(cells[2]) == pytest.approx(0.5)
    assert cells[3] == ""
    assert runner.invoke(app, ["lattice", "4", "3"]).exit_code == 2


def test_glauber_exact_sweep(tmp_path: Path) -> None:
    out = tmp_path / "glauber.json"
    res = runner.invoke(app, ["glauber", "3", "1", "1.4", "--beta", "1,2", "--out", str(out)])
    assert res.exit_code == 0
    result = json.loads(out.read_text(encoding="utf-8"))["result"]
    assert result["landscape"]["gamma"] == pytest.approx(3.2)
    assert result["landscape"]["gate"] == 18
    assert [r["beta"] for r in result["sweep"]] == [1.0, 2.0]
    assert runner.invoke(app, ["glauber", "5", "1", "1.4"]).exit_code == 3
    assert runner.invoke(app, ["glauber", "2", "1", "2"]).exit_code == 2


def test_mc_commands_are_reproducible(edge_file) -> None:
    net = edge_file(P4_EDGES)
    args = ["mc", "hitting", str(net), "--set", "A=0", "--set", "B=3", "--start", "1", "--samples", "300", "--seed", "7"]
    first = runner.invoke(app, args)
    again = runner.invoke(app, args)
    assert first.stdout == again.stdout
    result = _json(first)["result"]
    assert result["exact_prob_a_first"] == pytest.approx(2 / 3)
    assert result["time_to_b"]["samples"] == 300


def test_mc_flux_and_coupling(edge_file) -> None:
    net = edge_file(P4_EDGES)
    args = ["mc", "flux", str(net), "--set", "A=0", "--set", "B=3", "--edge", "1,2", "--samples", "50"]
    result = _json(runner.invoke(app, args))["result"]
    assert result["mean"] == 1.0
    assert result["exact"] == pytest.approx(1.0)

    lazy = edge_file(LAZY_K2_EDGES, name="lazy.txt")
    args = ["mc", "coupling", str(lazy), "a", "b", "--times", "1,2", "--samples", "200"]
    result = _json(runner.invoke(app, args))["result"]
    assert set(result["tail"]) == {"1", "2"}
    assert result["exact_tv"]["1"] >= 0.0


def test_mc_escape(edge_file, tmp_path: Path) -> None:
    net = edge_file("a a 9\na b 1\n")
    dump = tmp_path / "taus.npy"
    args = ["mc", "escape", str(net), "--source", "a", "--set", "B=b", "--samples", "100", "--dump", str(dump)]
    result = _json(runner.invoke(app, args))["result"]
    assert result["mean_exact"] == pytest.approx(10.0)
    assert "normalized_samples" not in result
    assert dump.exists()
    assert runner.invoke(app, ["mc", "escape", str(net), "--glauber", "2,1,1.4"]).exit_code == 1
    assert runner.invoke(app, ["mc", "escape", "--glauber", "2,1,1.4", "--samples", "20"]).exit_code == 0


def test_main_maps_failures_to_exit_codes(tmp_path: Path) -> None:
    assert main(["--bogus"]) == 1
    assert main(["solve", str(tmp_path / "missing.txt")]) == 1
    assert main(["glauber", "2"]) == 1
    assert main(["glauber", "2", "1", "2"]) == 2
    assert main(["glauber", "5", "1", "1.4"]) == 3


def test_main_runs_glauber_with_positional_parameters(tmp_path: Path) -> None:
    out = tmp_path / "g.json"
    assert main(["glauber", "3", "1", "1.4", "--beta", "1", "--out", str(out)]) == 0
    payload = json.loads(out.read_text(encoding="utf-8"))
    assert payload["config"]["options"]["L"] == 3
    assert payload["result"]["landscape"]["L"] == 3
    assert payload["config"]["options"]["h"] == 1.4
