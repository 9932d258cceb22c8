from __future__ import annotations

from dataclasses import replace

import pytest

from marketq.curves import CurveSet, LinearCurve
from marketq.errors import ConfigurationError
from marketq.harness import (
    load_config,
    parse_config_text,
    preset_path,
    run_compare,
    run_experiment,
    run_tradeoff,
    serialize_config,
    validate_config,
)
from marketq.policies import Schedule

MINI = """
[system]
customers = 1
servers = 1

[edge]
customer = 1
server = 1

[curve]
kind = demand
index = 1
intercept = 2.0
slope = 2.0

[curve]
kind = supply
index = 1
intercept = 0.0
slope = 2.0

[run]
horizon = 4000
seeds = 0..2
policies = prob2p,threshold
w = 0.001

[schedule]
gamma = 1/6
mode = anytime
eta_mult = 0.2
delta_mult = 0.2
alpha_mult = 0.2
e_override_mult = 6.0
beta = 1.0
a_min = 0.01

[output]
dir = out
checkpoints = 25
trace = false
"""


class TestConfigFormat:
    def test_parse_minimal(self):
        cfg = parse_config_text(MINI)
        assert cfg.horizon == 4000
        assert cfg.seeds == (0, 1, 2)
        assert cfg.policies == ("prob2p", "threshold")
        assert cfg.schedule.gamma == pytest.approx(1 / 6)
        assert cfg.curves.demand[0].intercept == 2.0

    def test_round_trip_identity(self):
        cfg = parse_config_text(MINI)
        again = parse_config_text(serialize_config(cfg))
        assert again == cfg
        assert serialize_config(again) == serialize_config(cfg)

    def test_presets_load_and_round_trip(self):
        for name in ("single_link", "multi_link"):
            cfg = load_config(preset_path(name))
            assert parse_config_text(serialize_config(cfg)) == cfg

    def test_single_link_preset_values(self):
        cfg = load_config(preset_path("single_link"))
        assert cfg.horizon == 10**6
        assert cfg.schedule.e_override_mult == 6.0
        assert cfg.schedule.a_min == 0.01
        assert cfg.schedule.eta_mult == 0.2
        assert cfg.schedule.beta == 1.0

    def test_multi_link_preset_values(self):
        cfg = load_config(preset_path("multi_link"))
        assert cfg.topology.n_customers == 3
        assert cfg.topology.edges == ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 1), (2, 2))
        assert cfg.schedule.eta_mult == 0.1
        assert cfg.schedule.delta_mult == 0.2
        assert cfg.schedule.e_override_mult == 8.0

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_config_text(MINI.replace("policies = prob2p,threshold", "policies = nope"))
        with pytest.raises(ConfigurationError):
            parse_config_text(MINI.replace("[system]", "[solar_system]"))
        with pytest.raises(ConfigurationError):
            parse_config_text(MINI.replace("kind = supply", "kind = demand"))


class TestRunExperiment:
    def _config(self, tmp_path, **kw):
        cfg = parse_config_text(MINI)
        return replace(cfg, out_dir=str(tmp_path), **kw)

    def test_produces_expected_row_count(self, tmp_path):
        cfg = self._config(tmp_path)
        outputs = run_experiment(cfg)
        lines = outputs["summary"].read_text().splitlines()
        header = lines[0].split(",")
        assert header == ["t", "policy", "seed", "regret", "avg_qlen", "max_qlen", "obj_w0.001"]
        rows = [line.split(",") for line in lines[1:]]
        pairs = {(r[1], r[2]) for r in rows}
        assert pairs == {(p, str(s)) for p in ("prob2p", "threshold") for s in (0, 1, 2)}
        # every (policy, seed) run contributes one row per checkpoint
        assert len(rows) % len(pairs) == 0
        per_run = len(rows) // len(pairs)
        for pair in pairs:
            assert sum(1 for r in rows if (r[1], r[2]) == pair) == per_run

    def test_reruns_byte_identical(self, tmp_path):
        cfg = self._config(tmp_path)
        first = run_experiment(cfg)["summary"].read_bytes()
        second = run_experiment(cfg)["summary"].read_bytes()
        assert first == second

    def test_parallel_matches_serial(self, tmp_path):
        serial = run_experiment(self._config(tmp_path / "a", workers=0))["summary"].read_bytes()
        parallel = run_experiment(self._config(tmp_path / "b", workers=3))["summary"].read_bytes()
        assert serial == parallel

    def test_fixed_policies_through_harness(self, tmp_path):
        cfg = self._config(tmp_path, policies=("genie2p", "eto"), seeds=(0,), horizon=2000)
        outputs = run_experiment(cfg)
        rows = outputs["summary"].read_text().splitlines()[1:]
        assert {r.split(",")[1] for r in rows} == {"genie2p", "eto"}

    def test_trace_emission(self, tmp_path):
        cfg = self._config(tmp_path, trace=True, horizon=500, seeds=(0,), policies=("prob2p",))
        outputs = run_experiment(cfg)
        tfile = outputs["trace_prob2p_0"]
        lines = tfile.read_text().splitlines()
        assert lines[0] == "t,queue,side,price,rate,arrival,matches,q_len,useful_flag"
        assert len(lines) == 1 + 500 * 2  # one row per queue per slot


class TestCompareAndTradeoff:
    def test_compare_schema(self, tmp_path):
        cfg = replace(parse_config_text(MINI), out_dir=str(tmp_path), horizon=3000)
        path = run_compare(cfg, "prob2p", "threshold")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,improvement_pct,ci_half_width"
        assert len(lines) > 2

    def test_tradeoff_schema(self, tmp_path):
        cfg = replace(parse_config_text(MINI), out_dir=str(tmp_path), horizon=3000, seeds=(0,))
        path = run_tradeoff(cfg, [1 / 12, 1 / 9, 1 / 6])
        lines = path.read_text().splitlines()
        assert lines[0] == "gamma,regret_exponent,queue_exponent"
        assert len(lines) == 4

    def test_tradeoff_needs_three_gammas(self, tmp_path):
        cfg = replace(parse_config_text(MINI), out_dir=str(tmp_path))
        with pytest.raises(ConfigurationError):
            run_tradeoff(cfg, [1 / 6, 1 / 9])


class TestValidate:
    def test_presets_validate(self):
        for name in ("single_link", "multi_link"):
            report = validate_config(load_config(preset_path(name)), samples=50)
            assert report.ok, report.errors

    def test_boundary_instance_warns(self):
        cfg = parse_config_text(MINI)
        curves = CurveSet(
            demand=(LinearCurve("demand", 2.0, 2.0),),
            supply=(LinearCurve("supply", 2.0, 2.0),),
        )
        report = validate_config(replace(cfg, curves=curves), samples=20)
        assert any("boundary" in w for w in report.warnings)

    def test_fixed_horizon_epsilon_check(self):
        cfg = parse_config_text(MINI)
        bad = replace(cfg, schedule=Schedule(gamma=1 / 6, mode="fixed_horizon", delta_mult=0.001), horizon=10**6)
        report = validate_config(bad, samples=10)
        assert any("epsilon" in e for e in report.errors)
