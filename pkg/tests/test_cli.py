from __future__ import annotations

import json
import subprocess
import sys

import pytest

from marketq.cli import main
from marketq.harness import preset_path

MINI = preset_path("single_link")


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for sub in ("fluid-solve", "simulate", "compare", "tradeoff", "validate"):
        assert sub in out


def test_unknown_flag_is_usage_error():
    proc = subprocess.run(
        [sys.executable, "-m", "marketq.cli", "simulate", "--config", str(MINI), "--bogus"],
        capture_output=True,
    )
    assert proc.returncode == 2


def test_missing_config_is_runtime_error(capsys):
    assert main(["simulate", "--config", "/nonexistent.cfg"]) == 1


def test_fluid_solve_single_link(capsys):
    assert main(["fluid-solve", "--config", str(MINI)]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    head = lines[0]
    assert head["type"] == "objective"
    assert abs(head["f_star"] - 0.25) <= 1e-8
    assert head["interior"]
    edge = [l for l in lines if l["type"] == "edge"][0]
    assert abs(edge["x_star"] - 0.25) <= 1e-8
    cust = [l for l in lines if l["type"] == "customer"][0]
    assert abs(cust["price"] - 1.5) <= 1e-8


def test_fluid_solve_multi_link(capsys):
    assert main(["fluid-solve", "--config", str(preset_path("multi_link"))]) == 0
    head = json.loads(capsys.readouterr().out.splitlines()[0])
    assert abs(head["f_star"] - 0.75) <= 1e-6


def test_fluid_solve_csv_mode(capsys):
    assert main(["fluid-solve", "--config", str(MINI), "--csv"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "kind,i,j,value"
    assert out[1].startswith("objective,,,0.25")


def test_simulate_writes_summary(tmp_path, capsys):
    rc = main(
        [
            "simulate",
            "--config",
            str(MINI),
            "--horizon",
            "2000",
            "--seeds",
            "0..1",
            "--policy",
            "prob2p",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    summary = tmp_path / "summary.csv"
    assert summary.exists()
    rows = summary.read_text().splitlines()
    assert rows[0].startswith("t,policy,seed,regret")
    seeds = {r.split(",")[2] for r in rows[1:]}
    assert seeds == {"0", "1"}


def test_tradeoff_cli(tmp_path, capsys):
    rc = main(
        [
            "tradeoff",
            "--config",
            str(MINI),
            "--gammas",
            "1/12,1/9,1/6",
            "--horizon",
            "2000",
            "--seeds",
            "0..1",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    lines = (tmp_path / "tradeoff.csv").read_text().splitlines()
    assert lines[0] == "gamma,regret_exponent,queue_exponent"
    assert len(lines) == 4


def test_compare_cli(tmp_path, capsys):
    rc = main(
        [
            "compare",
            "--config",
            str(MINI),
            "--horizon",
            "2000",
            "--seeds",
            "0..2",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    assert (tmp_path / "compare.csv").exists()


def test_validate_cli(capsys):
    assert main(["validate", "--config", str(MINI)]) == 0
    assert "validation passed" in capsys.readouterr().out
