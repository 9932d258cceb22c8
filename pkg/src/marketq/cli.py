"""Command-line interface.

Subcommands: fluid-solve, simulate, compare, tradeoff, validate.  Exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigurationError, DomainError, NumericalError
from .fluid import solve_fluid
from .harness import (
    ExperimentConfig,
    load_config,
    preset_path,
    run_compare,
    run_experiment,
    run_tradeoff,
    validate_config,
)


def _parse_gamma(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _parse_seed_range(text: str) -> tuple[int, ...]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in text.split(",") if s.strip())


def _load(args) -> ExperimentConfig:
    path = Path(args.config)
    if not path.exists() and preset_path(path.stem).exists():
        path = preset_path(path.stem)
    config = load_config(path)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seeds=(args.seed,))
    if getattr(args, "seeds", None):
        config = replace(config, seeds=_parse_seed_range(args.seeds))
    if getattr(args, "policy", None):
        config = replace(config, policies=(args.policy,))
    if getattr(args, "gamma", None):
        config = replace(config, schedule=replace(config.schedule, gamma=_parse_gamma(args.gamma)))
    if getattr(args, "out", None):
        config = replace(config, out_dir=args.out)
    if getattr(args, "trace", False):
        config = replace(config, trace=True)
    if getattr(args, "horizon", None):
        config = replace(config, horizon=args.horizon)
    if getattr(args, "workers", None) is not None:
        config = replace(config, workers=args.workers)
    return config


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="config file path or bundled preset name")
    sub.add_argument("--seed", type=int, help="run a single seed")
    sub.add_argument("--seeds", help="seed range a..b or comma list")
    sub.add_argument("--policy", help="restrict to one policy")
    sub.add_argument("--gamma", help="override the schedule exponent (float or fraction)")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--trace", action="store_true", help="stream per-slot traces to CSV")
    sub.add_argument("--horizon", type=int, help="override the run horizon")
    sub.add_argument("--workers", type=int, help="parallel worker processes (0 = serial)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketq",
        description="Dynamic pricing and matching simulator for two-sided queueing networks",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_fluid = subs.add_parser("fluid-solve", help="solve the static benchmark program")
    _add_common(p_fluid)
    p_fluid.add_argument("--csv", action="store_true", help="emit CSV instead of JSON lines")

    p_sim = subs.add_parser("simulate", help="run the configured policies over all seeds")
    _add_common(p_sim)

    p_cmp = subs.add_parser("compare", help="paired comparison of a policy against a baseline")
    _add_common(p_cmp)
    p_cmp.add_argument("--baseline", default="threshold", help="baseline policy name")
    p_cmp.add_argument("--w", type=float, help="holding-cost weight (default: first configured)")

    p_trd = subs.add_parser("tradeoff", help="regret/queue growth exponents over gamma values")
    _add_common(p_trd)
    p_trd.add_argument("--gammas", required=True, help="comma list of gamma values (fractions ok)")

    p_val = subs.add_parser("validate", help="assumption checks and oracle cross-checks")
    _add_common(p_val)
    return parser


def _cmd_fluid_solve(args) -> int:
    config = _load(args)
    fluid = solve_fluid(config.topology, config.curves, config.schedule.a_min)
    top, curves = config.topology, config.curves
    if args.csv:
        print("kind,i,j,value")
        print(f"objective,,,{float(fluid.f_star)!r}")
        print(f"kkt_residual,,,{float(fluid.kkt_residual)!r}")
        for e, (i, j) in enumerate(top.edges):
            print(f"x_star,{i + 1},{j + 1},{float(fluid.x_star[e])!r}")
            print(f"xi,{i + 1},{j + 1},{float(fluid.xi[e])!r}")
        for i in range(top.n_customers):
            print(f"lambda_star,{i + 1},,{float(fluid.lambda_star[i])!r}")
            print(f"kappa_c,{i + 1},,{float(fluid.kappa_c[i])!r}")
            print(f"gamma_c,{i + 1},,{float(fluid.gamma_c[i])!r}")
        for j in range(top.n_servers):
            print(f"mu_star,,{j + 1},{float(fluid.mu_star[j])!r}")
            print(f"kappa_s,,{j + 1},{float(fluid.kappa_s[j])!r}")
            print(f"gamma_s,,{j + 1},{float(fluid.gamma_s[j])!r}")
    else:
        print(
            json.dumps(
                {
                    "type": "objective",
                    "f_star": fluid.f_star,
                    "kkt_residual": fluid.kkt_residual,
                    "interior": fluid.interior,
                    "interior_report": fluid.interior_report,
                }
            )
        )
        for e, (i, j) in enumerate(top.edges):
            print(
                json.dumps(
                    {"type": "edge", "i": i + 1, "j": j + 1, "x_star": fluid.x_star[e], "xi": fluid.xi[e]}
                )
            )
        for i in range(top.n_customers):
            print(
                json.dumps(
                    {
                        "type": "customer",
                        "i": i + 1,
                        "lambda_star": fluid.lambda_star[i],
                        "price": curves.demand[i].price_of_rate(fluid.lambda_star[i]),
                        "kappa": fluid.kappa_c[i],
                        "gamma": fluid.gamma_c[i],
                    }
                )
            )
        for j in range(top.n_servers):
            print(
                json.dumps(
                    {
                        "type": "server",
                        "j": j + 1,
                        "mu_star": fluid.mu_star[j],
                        "price": curves.supply[j].price_of_rate(fluid.mu_star[j]),
                        "kappa": fluid.kappa_s[j],
                        "gamma": fluid.gamma_s[j],
                    }
                )
            )
    return 0


def _cmd_simulate(args) -> int:
    config = _load(args)
    outputs = run_experiment(config)
    for name, path in sorted(outputs.items()):
        print(f"{name}: {path}")
    return 0


def _cmd_compare(args) -> int:
    config = _load(args)
    policy = args.policy or "prob2p"
    path = run_compare(config, policy=policy, baseline=args.baseline, w=args.w)
    print(f"compare: {path}")
    return 0


def _cmd_tradeoff(args) -> int:
    import numpy as np

    config = _load(args)
    gammas = [_parse_gamma(g) for g in args.gammas.split(",") if g.strip()]
    path = run_tradeoff(config, gammas, policy=args.policy or "prob2p")
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    gs = np.array([float(r[0]) for r in rows])
    for label, col in (("regret", 1), ("avg_qlen", 2)):
        slope, intercept = np.polyfit(gs, np.array([float(r[col]) for r in rows]), 1)
        print(f"{label} exponent fit: slope={slope:.4f} intercept={intercept:.4f}")
    print(f"tradeoff: {path}")
    return 0


def _cmd_validate(args) -> int:
    config = _load(args)
    report = validate_config(config)
    for w in report.warnings:
        print(f"warning: {w}")
    for e in report.errors:
        print(f"error: {e}")
    print("validation " + ("passed" if report.ok else "FAILED"))
    return 0 if report.ok else 1


_COMMANDS = {
    "fluid-solve": _cmd_fluid_solve,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "tradeoff": _cmd_tradeoff,
    "validate": _cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, DomainError, NumericalError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
