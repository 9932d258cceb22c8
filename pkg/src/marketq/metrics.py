"""Regret, queue-length statistics, comparisons and tradeoff fits.

Profit and regret are rate-based: each slot contributes the expected
revenue minus cost of the rates the policy set, not the realized cash
flow.  Realized arrivals are kept separately for diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import CurveSet
from .errors import ConfigurationError, DomainError
from .fluid import FluidSolution
from .queueing import FullTrace


@dataclass
class RunTrace:
    """Per-slot record of one simulated run plus its metadata."""

    policy: str
    seed: int
    gamma: float
    horizon: int
    instance_key: str
    profit_per_slot: np.ndarray  # expected (rate-based) profit each slot
    qlen_per_slot: np.ndarray  # total queue length after each slot
    qmax_per_slot: np.ndarray  # running maximum single-queue length
    outer_iterations: int = 0
    final_x: np.ndarray | None = None
    arrivals_total: np.ndarray | None = None
    matches_total: np.ndarray | None = None
    final_queues: np.ndarray | None = None
    structural_violation: int | None = None
    exploration_slots: int | None = None
    x_history: list | None = None
    table: FullTrace | None = None

    def __post_init__(self):
        if len(self.profit_per_slot) > self.horizon:
            raise ConfigurationError("trace longer than its horizon")

    @property
    def n_slots(self) -> int:
        return len(self.profit_per_slot)


def expected_profit(trace: RunTrace, curves: CurveSet | None = None) -> np.ndarray:
    """Cumulative expected profit series Profit(t), t = 1..n."""
    series = np.cumsum(trace.profit_per_slot)
    if curves is not None and trace.table is not None:
        n_c = len(curves.demand)
        rates, prices = trace.table.rates, trace.table.prices
        per_slot = (rates[:, :n_c] * prices[:, :n_c]).sum(axis=1) - (
            rates[:, n_c:] * prices[:, n_c:]
        ).sum(axis=1)
        if not np.allclose(per_slot, trace.profit_per_slot, atol=1e-9):
            raise ConfigurationError("recorded per-slot profit disagrees with the trace table")
    return series


def realized_profit(trace: RunTrace) -> np.ndarray:
    """Cumulative cash flow from actual arrivals; needs a full trace table."""
    if trace.table is None:
        raise ConfigurationError("realized profit needs a run traced with record_trace")
    n_c = trace.table.topology.n_customers
    prices, arrivals = trace.table.prices, trace.table.arrivals
    per_slot = (prices[:, :n_c] * arrivals[:, :n_c]).sum(axis=1) - (
        prices[:, n_c:] * arrivals[:, n_c:]
    ).sum(axis=1)
    return np.cumsum(per_slot)


def regret(trace: RunTrace, fluid: FluidSolution) -> np.ndarray:
    """R(t) = t * f_star - Profit(t)."""
    if fluid.instance_key != trace.instance_key:
        raise ConfigurationError("fluid solution belongs to a different instance")
    t = np.arange(1, trace.n_slots + 1)
    return t * fluid.f_star - expected_profit(trace)


def queue_metrics(trace: RunTrace) -> tuple[np.ndarray, np.ndarray]:
    """(AvgQLen(t), MaxQLen(t)) series."""
    t = np.arange(1, trace.n_slots + 1)
    avg = np.cumsum(trace.qlen_per_slot) / t
    return avg, trace.qmax_per_slot.astype(float)


def combined_objective(regret_series: np.ndarray, avgq_series: np.ndarray, w: float) -> np.ndarray:
    """R(t) + w * t * AvgQLen(t), the profit regret plus holding cost."""
    if len(regret_series) != len(avgq_series):
        raise DomainError("series must be aligned")
    t = np.arange(1, len(regret_series) + 1)
    return regret_series + w * t * avgq_series


def improvement_series(obj_policy: np.ndarray, obj_baseline: np.ndarray) -> np.ndarray:
    """Percent improvement of a policy over a baseline, positive = better.

    Points where the baseline objective is zero are returned as NaN.
    """
    if len(obj_policy) != len(obj_baseline):
        raise DomainError("series must be aligned")
    out = np.full(len(obj_policy), np.nan)
    nz = obj_baseline != 0
    out[nz] = 100.0 * (obj_baseline[nz] - obj_policy[nz]) / obj_baseline[nz]
    return out


def improvement_pct(summary_a: "RunSummary", summary_b: "RunSummary", w: float) -> np.ndarray:
    """Improvement of policy a over baseline b at holding-cost weight w."""
    if summary_a.horizon != summary_b.horizon or not np.array_equal(
        summary_a.checkpoints, summary_b.checkpoints
    ):
        raise DomainError("summaries must share horizon and checkpoints")
    return improvement_series(summary_a.objective(w), summary_b.objective(w))


def growth_exponent(series: np.ndarray, t_lo: int, t_hi: int) -> float:
    """Mean of log2(series(t)) / log2(t) over the window, skipping values <= 0."""
    n = len(series)
    t_lo = max(2, t_lo)
    t_hi = min(t_hi, n)
    if t_hi < t_lo:
        raise DomainError("empty exponent window")
    t = np.arange(t_lo, t_hi + 1)
    vals = series[t_lo - 1 : t_hi]
    keep = vals > 0
    if not np.any(keep):
        raise DomainError("series is nonpositive on the whole window")
    return float(np.mean(np.log2(vals[keep]) / np.log2(t[keep])))


@dataclass
class TradeoffFit:
    regret_slope: float
    regret_intercept: float
    queue_slope: float
    queue_intercept: float
    rows: list[tuple[float, float, float]]  # (gamma, regret_exponent, queue_exponent)


def tradeoff_fit(
    gammas: list[float],
    runs: dict[float, list[RunTrace]],
    fluids: dict[float, FluidSolution] | FluidSolution,
    window: tuple[int, int] | None = None,
) -> TradeoffFit:
    """Least-squares line through (gamma, growth exponent) for both metrics.

    Per gamma, the exponent is the seed-average of the time-averaged
    log-log ratio; the default window is [T/10, T].
    """
    if len(gammas) < 3:
        raise DomainError("need at least 3 gamma values to fit a line")
    rows = []
    for g in gammas:
        traces = runs[g]
        fluid = fluids[g] if isinstance(fluids, dict) else fluids
        r_exps, q_exps = [], []
        for tr in traces:
            t_hi = tr.n_slots
            t_lo = max(2, math.ceil(t_hi / 10)) if window is None else window[0]
            hi = t_hi if window is None else min(window[1], t_hi)
            r_exps.append(growth_exponent(regret(tr, fluid), t_lo, hi))
            avg, _ = queue_metrics(tr)
            q_exps.append(growth_exponent(avg, t_lo, hi))
        rows.append((g, float(np.mean(r_exps)), float(np.mean(q_exps))))
    gs = np.array([r[0] for r in rows])
    r_slope, r_icpt = np.polyfit(gs, np.array([r[1] for r in rows]), 1)
    q_slope, q_icpt = np.polyfit(gs, np.array([r[2] for r in rows]), 1)
    return TradeoffFit(float(r_slope), float(r_icpt), float(q_slope), float(q_icpt), rows)


def confidence_interval(values) -> tuple[float, float]:
    """Mean and normal-approximation 95% half width over independent runs."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DomainError("need at least two values for a confidence interval")
    mean = float(np.mean(values))
    half = 1.96 * float(np.std(values, ddof=1)) / math.sqrt(values.size)
    return mean, half


@dataclass
class RunSummary:
    """Checkpointed series of one run, ready for CSV emission."""

    policy: str
    seed: int
    gamma: float
    horizon: int
    checkpoints: np.ndarray  # 1-based slot indices
    regret: np.ndarray
    avg_qlen: np.ndarray
    max_qlen: np.ndarray
    objectives: dict[float, np.ndarray] = field(default_factory=dict)

    def objective(self, w: float) -> np.ndarray:
        return self.objectives[w]


def checkpoint_grid(horizon: int, count: int) -> np.ndarray:
    """Log-spaced 1-based slot indices, always including the final slot."""
    if count < 1:
        raise DomainError("need at least one checkpoint")
    pts = np.unique(np.round(np.geomspace(1, horizon, count)).astype(np.int64))
    pts[-1] = horizon
    return np.unique(pts)


def summarize(
    trace: RunTrace,
    fluid: FluidSolution,
    w_list: list[float],
    checkpoints: np.ndarray,
) -> RunSummary:
    reg = regret(trace, fluid)
    avg, qmax = queue_metrics(trace)
    idx = np.asarray(checkpoints, dtype=np.int64) - 1
    if np.any(idx < 0) or np.any(idx >= trace.n_slots):
        raise DomainError("checkpoints outside the trace")
    objectives = {
        w: combined_objective(reg, avg, w)[idx] for w in w_list
    }
    return RunSummary(
        policy=trace.policy,
        seed=trace.seed,
        gamma=trace.gamma,
        horizon=trace.horizon,
        checkpoints=np.asarray(checkpoints, dtype=np.int64),
        regret=reg[idx],
        avg_qlen=avg[idx],
        max_qlen=qmax[idx],
        objectives=objectives,
    )
