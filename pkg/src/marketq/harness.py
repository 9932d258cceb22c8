"""Experiment configuration, seed sweeps and CSV emission.

Configs are flat sectioned ``key = value`` text with repeated ``[edge]``
and ``[curve]`` blocks (grammar in the README).  A config plus a seed
fully determines a run; run-level parallelism never changes output bytes
because rows are merged under a fixed sort.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .curves import CurveSet, LinearCurve, audit_curve, rejects_arrivals
from .errors import ConfigurationError
from .fluid import (
    ShrunkRegion,
    Topology,
    effective_a_min,
    induced_rates,
    inner_radius,
    project_to_shrunk,
    solve_fluid,
)
from .metrics import (
    RunSummary,
    RunTrace,
    checkpoint_grid,
    confidence_interval,
    growth_exponent,
    improvement_series,
    queue_metrics,
    regret,
    summarize,
)
from .oracles import FeasibleGrid, transportation_feasible
from .policies import ANYTIME, PolicyConfig, Schedule, run_policy, schedule_params
from .rng import RngStreams

KNOWN_POLICIES = ("prob2p", "threshold", "genie2p", "eto")


@dataclass(frozen=True)
class ExperimentConfig:
    topology: Topology
    curves: CurveSet
    schedule: Schedule
    horizon: int
    seeds: tuple[int, ...]
    policies: tuple[str, ...]
    w_list: tuple[float, ...]
    out_dir: str = "results"
    checkpoints: int = 200
    trace: bool = False
    workers: int = 0  # 0 = serial
    genie_alpha: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least 1")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")
        for p in self.policies:
            if p not in KNOWN_POLICIES:
                raise ConfigurationError(f"unknown policy {p!r}")
        if self.curves.n_customers != self.topology.n_customers:
            raise ConfigurationError("one demand curve per customer type required")
        if self.curves.n_servers != self.topology.n_servers:
            raise ConfigurationError("one supply curve per server type required")


# ---------------------------------------------------------------------------
# config text format


def _parse_scalar(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def _parse_seeds(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if ".." in raw:
        lo, hi = raw.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(s) for s in raw.split(",") if s.strip())


def parse_config_text(text: str) -> ExperimentConfig:
    sections: list[tuple[str, dict]] = []
    current: dict | None = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = {}
            sections.append((line[1:-1].strip().lower(), current))
            continue
        if "=" not in line or current is None:
            raise ConfigurationError(f"line {lineno}: expected 'key = value' inside a section")
        key, value = line.split("=", 1)
        current[key.strip().lower()] = value.strip()

    def section(name: str) -> dict:
        found = [body for sec, body in sections if sec == name]
        if not found:
            raise ConfigurationError(f"missing [{name}] section")
        return found[0]

    system = section("system")
    n_c = int(system["customers"])
    n_s = int(system["servers"])
    edges = []
    for sec, body in sections:
        if sec == "edge":
            edges.append((int(body["customer"]) - 1, int(body["server"]) - 1))
    topology = Topology(n_c, n_s, tuple(edges))

    demand: dict[int, LinearCurve] = {}
    supply: dict[int, LinearCurve] = {}
    for sec, body in sections:
        if sec != "curve":
            continue
        kind = body["kind"]
        idx = int(body["index"]) - 1
        curve = LinearCurve(
            kind=kind,
            intercept=float(_parse_scalar(body["intercept"])),
            slope=float(_parse_scalar(body["slope"])),
            p_min=float(_parse_scalar(body["p_min"])) if "p_min" in body else None,
            p_max=float(_parse_scalar(body["p_max"])) if "p_max" in body else None,
        )
        (demand if kind == "demand" else supply)[idx] = curve
    if sorted(demand) != list(range(n_c)) or sorted(supply) != list(range(n_s)):
        raise ConfigurationError("need exactly one curve per queue on each side")
    curves = CurveSet(
        demand=tuple(demand[i] for i in range(n_c)),
        supply=tuple(supply[j] for j in range(n_s)),
    )

    sched_body = section("schedule")
    schedule = Schedule(
        gamma=float(_parse_scalar(sched_body["gamma"])),
        mode=str(sched_body.get("mode", "fixed_horizon")),
        eta_mult=float(_parse_scalar(sched_body.get("eta_mult", "1.0"))),
        delta_mult=float(_parse_scalar(sched_body.get("delta_mult", "1.0"))),
        alpha_mult=float(_parse_scalar(sched_body.get("alpha_mult", "1.0"))),
        e_override_mult=(
            float(_parse_scalar(sched_body["e_override_mult"]))
            if "e_override_mult" in sched_body
            else None
        ),
        beta=float(_parse_scalar(sched_body["beta"])) if "beta" in sched_body else None,
        a_min=float(_parse_scalar(sched_body.get("a_min", "0.01"))),
        alpha_literal_growth=bool(_parse_scalar(sched_body.get("alpha_literal_growth", "false"))),
    )

    run = section("run")
    output = dict(section("output")) if any(s == "output" for s, _ in sections) else {}
    return ExperimentConfig(
        topology=topology,
        curves=curves,
        schedule=schedule,
        horizon=int(_parse_scalar(run["horizon"])),
        seeds=_parse_seeds(run.get("seeds", "0")),
        policies=tuple(p.strip() for p in run.get("policies", "prob2p").split(",") if p.strip()),
        w_list=tuple(float(_parse_scalar(w)) for w in run.get("w", "0.001").split(",")),
        out_dir=output.get("dir", "results"),
        checkpoints=int(output.get("checkpoints", 200)),
        trace=bool(_parse_scalar(output.get("trace", "false"))),
        workers=int(run.get("workers", 0)),
        genie_alpha=(
            float(_parse_scalar(sched_body["genie_alpha"])) if "genie_alpha" in sched_body else None
        ),
        zeta=float(_parse_scalar(sched_body["zeta"])) if "zeta" in sched_body else None,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def serialize_config(config: ExperimentConfig) -> str:
    lines = ["[system]", f"customers = {config.topology.n_customers}", f"servers = {config.topology.n_servers}", ""]
    for i, j in config.topology.edges:
        lines += ["[edge]", f"customer = {i + 1}", f"server = {j + 1}", ""]
    for idx, c in enumerate(config.curves.demand):
        lines += [
            "[curve]",
            "kind = demand",
            f"index = {idx + 1}",
            f"intercept = {c.intercept!r}",
            f"slope = {c.slope!r}",
            f"p_min = {c.p_min!r}",
            f"p_max = {c.p_max!r}",
            "",
        ]
    for idx, c in enumerate(config.curves.supply):
        lines += [
            "[curve]",
            "kind = supply",
            f"index = {idx + 1}",
            f"intercept = {c.intercept!r}",
            f"slope = {c.slope!r}",
            f"p_min = {c.p_min!r}",
            f"p_max = {c.p_max!r}",
            "",
        ]
    seeds = config.seeds
    contiguous = list(seeds) == list(range(seeds[0], seeds[-1] + 1))
    seeds_text = f"{seeds[0]}..{seeds[-1]}" if contiguous and len(seeds) > 1 else ",".join(map(str, seeds))
    lines += [
        "[run]",
        f"horizon = {config.horizon}",
        f"seeds = {seeds_text}",
        f"policies = {','.join(config.policies)}",
        f"w = {','.join(repr(w) for w in config.w_list)}",
        f"workers = {config.workers}",
        "",
        "[schedule]",
        f"gamma = {config.schedule.gamma!r}",
        f"mode = {config.schedule.mode}",
        f"eta_mult = {config.schedule.eta_mult!r}",
        f"delta_mult = {config.schedule.delta_mult!r}",
        f"alpha_mult = {config.schedule.alpha_mult!r}",
    ]
    if config.schedule.e_override_mult is not None:
        lines.append(f"e_override_mult = {config.schedule.e_override_mult!r}")
    if config.schedule.beta is not None:
        lines.append(f"beta = {config.schedule.beta!r}")
    lines.append(f"a_min = {config.schedule.a_min!r}")
    lines.append(f"alpha_literal_growth = {str(config.schedule.alpha_literal_growth).lower()}")
    if config.genie_alpha is not None:
        lines.append(f"genie_alpha = {config.genie_alpha!r}")
    if config.zeta is not None:
        lines.append(f"zeta = {config.zeta!r}")
    lines += [
        "",
        "[output]",
        f"dir = {config.out_dir}",
        f"checkpoints = {config.checkpoints}",
        f"trace = {str(config.trace).lower()}",
        "",
    ]
    return "\n".join(lines)


def preset_path(name: str) -> Path:
    return Path(__file__).parent / "presets" / f"{name}.cfg"


# ---------------------------------------------------------------------------
# execution


def _policy_config(config: ExperimentConfig, seed: int) -> PolicyConfig:
    return PolicyConfig(
        topology=config.topology,
        curves=config.curves,
        schedule=config.schedule,
        horizon=config.horizon,
        seed=seed,
        record_trace=config.trace,
        check_structure=config.trace,
        genie_alpha=config.genie_alpha,
        zeta=config.zeta,
    )


@dataclass
class WorkerResult:
    summary: RunSummary
    regret_exponent: float
    queue_exponent: float
    trace_rows: list[tuple] | None = None


def _trace_rows(trace: RunTrace) -> list[tuple]:
    table = trace.table
    top = table.topology
    n_c = top.n_customers
    rows = []
    match_per_queue = np.zeros((table.matches.shape[0], n_c + top.n_servers), dtype=np.int64)
    for e, (i, j) in enumerate(top.edges):
        match_per_queue[:, i] += table.matches[:, e]
        match_per_queue[:, n_c + j] += table.matches[:, e]
    for t in range(table.arrivals.shape[0]):
        for k in range(n_c + top.n_servers):
            side = "customer" if k < n_c else "server"
            qid = k + 1 if k < n_c else k - n_c + 1
            rows.append(
                (
                    t + 1,
                    qid,
                    side,
                    repr(float(table.prices[t, k])),
                    repr(float(table.rates[t, k])),
                    int(table.arrivals[t, k]),
                    int(match_per_queue[t, k]),
                    int(table.q_len[t, k]),
                    int(table.useful[t, k]),
                )
            )
    return rows


def run_single(config: ExperimentConfig, policy: str, seed: int) -> WorkerResult:
    """One (policy, seed) run reduced to its summary and growth exponents."""
    trace = run_policy(policy, _policy_config(config, seed))
    fluid = solve_fluid(config.topology, config.curves, config.schedule.a_min)
    grid = checkpoint_grid(trace.n_slots, config.checkpoints)
    summary = summarize(trace, fluid, list(config.w_list), grid)
    t_hi = trace.n_slots
    t_lo = max(2, math.ceil(t_hi / 10))
    try:
        r_exp = growth_exponent(regret(trace, fluid), t_lo, t_hi)
    except Exception:
        r_exp = float("nan")
    try:
        q_exp = growth_exponent(queue_metrics(trace)[0], t_lo, t_hi)
    except Exception:
        q_exp = float("nan")
    rows = _trace_rows(trace) if config.trace else None
    return WorkerResult(summary, r_exp, q_exp, rows)


def _run_units(config: ExperimentConfig, units: list[tuple[str, int]]) -> list[WorkerResult]:
    if config.workers and config.workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(run_single, config, p, s) for p, s in units]
            return [f.result() for f in futures]
    return [run_single(config, p, s) for p, s in units]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_summary_csv(path: Path, results: list[WorkerResult], w_list: tuple[float, ...]) -> None:
    header = ["t", "policy", "seed", "regret", "avg_qlen", "max_qlen"] + [
        f"obj_w{w!r}" for w in w_list
    ]
    rows = []
    for res in results:
        s = res.summary
        for k, t in enumerate(s.checkpoints):
            rows.append(
                [int(t), s.policy, s.seed, _fmt(s.regret[k]), _fmt(s.avg_qlen[k]), _fmt(s.max_qlen[k])]
                + [_fmt(s.objectives[w][k]) for w in w_list]
            )
    rows.sort(key=lambda r: (r[1], int(r[2]), int(r[0])))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def run_experiment(config: ExperimentConfig) -> dict[str, Path]:
    """Execute all (policy x seed) runs and write the summary CSV."""
    out_dir = Path(config.out_dir)
    units = [(p, s) for p in config.policies for s in config.seeds]
    results = _run_units(config, units)
    outputs: dict[str, Path] = {}
    summary_path = out_dir / "summary.csv"
    write_summary_csv(summary_path, results, config.w_list)
    outputs["summary"] = summary_path
    if config.trace:
        for (policy, seed), res in zip(units, results):
            tpath = out_dir / f"trace_{policy}_{seed}.csv"
            with tpath.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["t", "queue", "side", "price", "rate", "arrival", "matches", "q_len", "useful_flag"]
                )
                writer.writerows(res.trace_rows)
            outputs[f"trace_{policy}_{seed}"] = tpath
    return outputs


def run_compare(
    config: ExperimentConfig, policy: str = "prob2p", baseline: str = "threshold", w: float | None = None
) -> Path:
    """Paired-seed comparison of a policy against a baseline."""
    w = config.w_list[0] if w is None else w
    cfg = replace(config, w_list=(w,), trace=False)
    res_a = _run_units(cfg, [(policy, s) for s in cfg.seeds])
    res_b = _run_units(cfg, [(baseline, s) for s in cfg.seeds])
    grid = res_a[0].summary.checkpoints
    series = np.vstack(
        [
            improvement_series(a.summary.objective(w), b.summary.objective(w))
            for a, b in zip(res_a, res_b)
        ]
    )
    out = Path(config.out_dir) / "compare.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "improvement_pct", "ci_half_width"])
        for k, t in enumerate(grid):
            vals = series[:, k]
            vals = vals[~np.isnan(vals)]
            if len(vals) >= 2:
                mean, half = confidence_interval(vals)
            elif len(vals) == 1:
                mean, half = float(vals[0]), 0.0
            else:
                mean, half = float("nan"), float("nan")
            writer.writerow([int(t), _fmt(mean), _fmt(half)])
    return out


def run_tradeoff(config: ExperimentConfig, gammas: list[float], policy: str = "prob2p") -> Path:
    """Growth exponents of regret and average queue length per gamma."""
    if len(gammas) < 3:
        raise ConfigurationError("need at least 3 gamma values")
    rows = []
    for g in gammas:
        cfg = replace(config, schedule=replace(config.schedule, gamma=g), trace=False)
        results = _run_units(cfg, [(policy, s) for s in cfg.seeds])
        r_exp = float(np.nanmean([r.regret_exponent for r in results]))
        q_exp = float(np.nanmean([r.queue_exponent for r in results]))
        rows.append((g, r_exp, q_exp))
    out = Path(config.out_dir) / "tradeoff.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "regret_exponent", "queue_exponent"])
        for g, r_exp, q_exp in rows:
            writer.writerow([_fmt(g), _fmt(r_exp), _fmt(q_exp)])
    return out


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_config(config: ExperimentConfig, samples: int = 200, seed: int = 0) -> ValidationReport:
    """Assumption checks and oracle cross-checks for one instance."""
    report = ValidationReport()
    top, curves, sched = config.topology, config.curves, config.schedule

    for label, curve in [(f"demand[{i}]", c) for i, c in enumerate(curves.demand)] + [
        (f"supply[{j}]", c) for j, c in enumerate(curves.supply)
    ]:
        for failure in audit_curve(curve):
            report.errors.append(f"{label}: {failure}")
        if not rejects_arrivals(curve):
            report.warnings.append(
                f"{label}: extreme price does not fully reject arrivals;"
                " the maximum-queue-length guarantee degrades"
            )

    a_min = effective_a_min(top, sched.a_min)
    if a_min != sched.a_min:
        report.warnings.append(
            f"a_min shrunk to {a_min:.6g} to satisfy the region validity conditions"
        )
    r = inner_radius(top, a_min)

    anytime = sched.mode == ANYTIME
    try:
        params = schedule_params(sched, config.horizon, strict=False)
        if params.epsilon >= 1.0 / math.e - 1e-12:
            (report.warnings if anytime else report.errors).append(
                "accuracy epsilon at the horizon is not below 1/e"
            )
        if params.epsilon >= params.delta:
            (report.warnings if anytime else report.errors).append(
                f"epsilon={params.epsilon:.4g} >= delta={params.delta:.4g} at the horizon"
            )
        if params.delta >= r:
            (report.warnings if anytime else report.errors).append(
                f"delta={params.delta:.4g} at the horizon is not below r={r:.4g}"
            )
    except ConfigurationError as exc:
        report.errors.append(str(exc))
        return report

    delta_eff = min(params.delta, r * (1 - 1e-9))
    region = ShrunkRegion(top, a_min, delta_eff)

    try:
        fluid = solve_fluid(top, curves, sched.a_min)
        if fluid.kkt_residual > 1e-8:
            report.errors.append(f"fluid optimality residual {fluid.kkt_residual:.2e} > 1e-8")
        if not fluid.interior:
            bad = [k for k, v in fluid.interior_report.items() if not v]
            report.warnings.append(
                f"optimal solution is boundary-optimal (failed: {', '.join(bad)});"
                " the interiority assumption does not hold"
            )
        if not transportation_feasible(top, fluid.lambda_star, fluid.mu_star):
            report.errors.append("optimal rates are not transportation-feasible")
    except Exception as exc:  # surfaced verbatim: the solver explains itself
        report.errors.append(f"fluid solve failed: {exc}")
        return report

    streams = RngStreams(seed, top.n_customers, top.n_servers)
    violations = 0
    for _ in range(samples):
        raw = np.array([streams.policy.uniform() for _ in range(top.n_edges)])
        x = project_to_shrunk(region, top, raw)
        u = np.array([streams.direction.normal() for _ in range(top.n_edges)])
        u /= max(float(np.linalg.norm(u)), 1e-12)
        probe = x + region.delta * u
        lam, mu = induced_rates(top, probe)
        if (
            np.any(probe < -1e-9)
            or np.any(lam < a_min - 1e-9)
            or np.any(lam > 1 + 1e-9)
            or np.any(mu < a_min - 1e-9)
            or np.any(mu > 1 + 1e-9)
        ):
            violations += 1
    if violations:
        report.errors.append(
            f"shrunk-region safety failed on {violations}/{samples} sampled perturbations"
        )

    if top.n_edges <= 2:
        grid = FeasibleGrid(region, 1e-3)
        for _ in range(10):
            raw = np.array([2.0 * streams.policy.uniform() - 0.5 for _ in range(top.n_edges)])
            mine = project_to_shrunk(region, top, raw)
            ref = grid.project(raw)
            if np.linalg.norm(mine - ref.argmin) > 1e-3 + 1e-6:
                report.errors.append("projection disagrees with the grid oracle")
                break
    return report
