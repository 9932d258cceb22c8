"""Pricing controllers.

The learning controller couples three layers: an outer zeroth-order
projected gradient ascent over matching rates, an inner bisection that
converts target rates into prices by sampling the system, and a per-slot
probabilistic two-price rule that balances sample collection against
queue control.  The threshold baseline is the same stack with the
probabilistic perturbation removed; the genie baseline prices from the
known fluid optimum; the estimate-then-optimize strawman explores a
price grid first and commits to a static price afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curves import CurveSet
from .engine import PhasePrices, SlotEngine
from .errors import ConfigurationError, DomainError
from .fluid import (
    FluidSolution,
    ShrunkRegion,
    Topology,
    effective_a_min,
    induced_rates,
    inner_radius,
    instance_key,
    project_to_shrunk,
    shrunk_contains,
    solve_fluid,
)
from .metrics import RunTrace
from .queueing import QueueState
from .rng import RngStreams

_EPS_CAP = 1.0 / math.e * (1.0 - 1e-9)
_NO_THRESHOLD = 1 << 62

FIXED_HORIZON = "fixed_horizon"
ANYTIME = "anytime"


@dataclass(frozen=True)
class Schedule:
    """Parameter schedule of the learning policies.

    In fixed-horizon mode every parameter is computed once from the
    horizon; in anytime mode they are re-evaluated from the current slot
    at the start of each outer iteration.
    """

    gamma: float
    mode: str = FIXED_HORIZON
    eta_mult: float = 1.0
    delta_mult: float = 1.0
    alpha_mult: float = 1.0
    e_override_mult: float | None = None
    beta: float | None = None
    a_min: float = 0.01
    alpha_literal_growth: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.mode not in (FIXED_HORIZON, ANYTIME):
            raise ConfigurationError(f"unknown schedule mode {self.mode!r}")
        for name in ("eta_mult", "delta_mult", "alpha_mult"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 < self.a_min < 1.0:
            raise ConfigurationError("a_min must lie in (0, 1)")


@dataclass(frozen=True)
class ScheduleParams:
    q_th: int
    epsilon: float
    eta: float
    delta: float
    alpha: float
    beta: float
    n_samples: int  # samples per queue per bisection round
    n_rounds: int  # bisection rounds


def sample_counts(epsilon: float, beta: float) -> tuple[int, int]:
    """Samples per queue per round and number of bisection rounds."""
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError("accuracy must lie in (0, 1)")
    n = max(1, math.ceil(beta * math.log(1.0 / epsilon) / epsilon**2 - 1e-9))
    m = max(0, math.ceil(math.log2(1.0 / epsilon) - 1e-12))
    return n, m


def schedule_params(schedule: Schedule, t_or_horizon: float, strict: bool = True) -> ScheduleParams:
    """Evaluate the schedule at a time scale (current slot or horizon).

    With ``strict`` the accuracy parameter must satisfy its theoretical
    range (below 1/e and below the exploration radius); without it the
    accuracy is clamped so early anytime iterations stay runnable.
    """
    s = float(t_or_horizon)
    if s < 1:
        raise ConfigurationError("time scale must be >= 1")
    gamma = schedule.gamma
    if gamma <= 1.0 / 6.0 + 1e-12:
        epsilon = s ** (-2.0 * gamma)
        eta = schedule.eta_mult * s ** (-gamma)
        delta = schedule.delta_mult * s ** (-gamma)
        alpha_exponent = gamma / 2.0
        beta_default = 1.0 / gamma - 1.0
    else:
        epsilon = s ** (-1.0 / 3.0)
        eta = schedule.eta_mult * s ** (-1.0 / 6.0)
        delta = schedule.delta_mult * s ** (-1.0 / 6.0)
        alpha_exponent = 1.0 / 12.0
        beta_default = 5.0
    if schedule.alpha_literal_growth:
        alpha = schedule.alpha_mult * s ** alpha_exponent
    else:
        alpha = schedule.alpha_mult * s ** (-alpha_exponent)
    beta = beta_default if schedule.beta is None else schedule.beta
    if strict:
        if epsilon >= 1.0 / math.e:
            raise ConfigurationError(f"accuracy epsilon={epsilon:.4g} must be below 1/e")
        if epsilon >= delta:
            raise ConfigurationError(
                f"accuracy epsilon={epsilon:.4g} must be below delta={delta:.4g}"
            )
    else:
        epsilon = min(epsilon, _EPS_CAP)
    q_th = max(1, math.ceil(s**gamma - 1e-12))
    n_samples, n_rounds = sample_counts(epsilon, beta)
    return ScheduleParams(q_th, epsilon, eta, delta, alpha, beta, n_samples, n_rounds)


def compute_margins(
    topology: Topology,
    curves: CurveSet,
    eta: float,
    epsilon: float,
    delta: float,
    override_mult: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Half-widths of the re-centered price search intervals.

    Either the exact expressions in the analysis or, when
    ``override_mult`` is set, the simulation shortcut
    ``override_mult * max(delta, eta, epsilon)``.
    """
    n_c, n_s = curves.n_customers, curves.n_servers
    if override_mult is not None:
        value = override_mult * max(delta, eta, epsilon)
        return np.full(n_c, value), np.full(n_s, value)
    n_edges = topology.n_edges
    e_sqrt = math.sqrt(n_edges)
    e_32 = n_edges * e_sqrt
    s1 = sum(
        c.lipschitz_fwd * (1.0 + c.lipschitz_inv * c.price_range())
        for c in curves.demand + curves.supply
    )
    s2 = sum(
        len(topology.customer_adj[i]) * (curves.demand[i].lipschitz_fwd + curves.demand[i].p_max)
        for i in range(n_c)
    ) + sum(
        len(topology.server_adj[j]) * (curves.supply[j].lipschitz_fwd + curves.supply[j].p_max)
        for j in range(n_s)
    )

    def margin(curve) -> float:
        l_f = curve.lipschitz_fwd
        if eta * epsilon == 0.0:
            lead = 0.0
        else:
            if delta == 0.0:
                raise DomainError("delta must be positive when eta*epsilon > 0")
            lead = 2.0 * eta * epsilon * e_32 * l_f / delta * s1
        return (
            lead
            + 2.0 * epsilon * l_f * (1.0 + curve.lipschitz_inv * curve.price_range())
            + eta * e_32 * l_f * s2
            + 2.0 * delta * e_sqrt * l_f
        )

    e_c = np.array([margin(curves.demand[i]) for i in range(n_c)])
    e_s = np.array([margin(curves.supply[j]) for j in range(n_s)])
    return e_c, e_s


@dataclass
class PricingDecision:
    prices_c: np.ndarray
    prices_s: np.ndarray
    useful_c: np.ndarray  # bool per customer queue
    useful_s: np.ndarray


def prob_two_price_decide(
    q: QueueState,
    midpoints: tuple[np.ndarray, np.ndarray],
    alpha: float,
    q_th: int,
    streams: RngStreams,
    curves: CurveSet,
) -> PricingDecision:
    """One slot of the probabilistic two-price rule.

    Empty queue: midpoint (a useful sample).  At or above the threshold:
    the rejection price.  In between: with probability 1/2 the price is
    shifted by ``alpha`` against the queue's own arrivals, and the slot's
    sample is discarded.
    """
    mid_c, mid_s = midpoints
    n_c = curves.n_customers
    prices_c = np.empty(n_c)
    useful_c = np.zeros(n_c, dtype=bool)
    for i in range(n_c):
        length = q.q_c[i]
        if length >= q_th:
            prices_c[i] = curves.demand[i].p_max
        elif length == 0:
            prices_c[i] = mid_c[i]
            useful_c[i] = True
        elif streams.coin_stream(i).uniform() < 0.5:
            prices_c[i] = min(mid_c[i] + alpha, curves.demand[i].p_max)
        else:
            prices_c[i] = mid_c[i]
            useful_c[i] = True
    n_s = curves.n_servers
    prices_s = np.empty(n_s)
    useful_s = np.zeros(n_s, dtype=bool)
    for j in range(n_s):
        length = q.q_s[j]
        if length >= q_th:
            prices_s[j] = curves.supply[j].p_min
        elif length == 0:
            prices_s[j] = mid_s[j]
            useful_s[j] = True
        elif streams.coin_stream(n_c + j).uniform() < 0.5:
            prices_s[j] = max(mid_s[j] - alpha, curves.supply[j].p_min)
        else:
            prices_s[j] = mid_s[j]
            useful_s[j] = True
    return PricingDecision(prices_c, prices_s, useful_c, useful_s)


def threshold_policy_decide(
    q: QueueState,
    midpoints: tuple[np.ndarray, np.ndarray],
    q_th: int,
    curves: CurveSet,
) -> PricingDecision:
    """Threshold baseline: midpoint below the threshold, rejection above."""
    mid_c, mid_s = midpoints
    n_c, n_s = curves.n_customers, curves.n_servers
    prices_c = np.array(
        [curves.demand[i].p_max if q.q_c[i] >= q_th else mid_c[i] for i in range(n_c)]
    )
    prices_s = np.array(
        [curves.supply[j].p_min if q.q_s[j] >= q_th else mid_s[j] for j in range(n_s)]
    )
    return PricingDecision(prices_c, prices_s, q.q_c < q_th, q.q_s < q_th)


def two_price_genie_decide(
    q: QueueState,
    fluid: FluidSolution,
    curves: CurveSet,
    alpha_bar: float,
) -> PricingDecision:
    """Genie baseline: optimal price at empty queues, rate-reduced otherwise."""
    n_c, n_s = curves.n_customers, curves.n_servers
    prices_c = np.empty(n_c)
    for i in range(n_c):
        rate = fluid.lambda_star[i] if q.q_c[i] == 0 else max(fluid.lambda_star[i] - alpha_bar, 0.0)
        prices_c[i] = curves.demand[i].price_of_rate(rate)
    prices_s = np.empty(n_s)
    for j in range(n_s):
        rate = fluid.mu_star[j] if q.q_s[j] == 0 else max(fluid.mu_star[j] - alpha_bar, 0.0)
        prices_s[j] = curves.supply[j].price_of_rate(rate)
    return PricingDecision(prices_c, prices_s, q.q_c == 0, q.q_s == 0)


@dataclass(frozen=True)
class PriceInterval:
    """Half-open search interval tracked as (lo, width) so halving is exact."""

    lo: float
    width: float

    @property
    def hi(self) -> float:
        return self.lo + self.width

    @property
    def midpoint(self) -> float:
        return self.lo + self.width / 2.0


def bisection_update(interval: PriceInterval, est_rate: float, target_rate: float, side: str) -> PriceInterval:
    """Halve the interval toward the target rate.

    Customer side: overshooting demand means the price must rise, keep the
    upper half.  Server side mirrors: overshooting supply keeps the lower
    half.  Ties follow the strict comparison (else-branch).
    """
    if not (0.0 <= est_rate <= 1.0 and 0.0 <= target_rate <= 1.0):
        raise DomainError("rates must lie in [0, 1]")
    half = interval.width / 2.0
    if side == "customer":
        lo = interval.midpoint if est_rate > target_rate else interval.lo
    elif side == "server":
        lo = interval.lo if est_rate > target_rate else interval.midpoint
    else:
        raise DomainError(f"side must be customer or server, got {side!r}")
    return PriceInterval(lo, half)


@dataclass
class BisectionOutcome:
    prices_c: np.ndarray
    prices_s: np.ndarray
    slots_consumed: int
    partial: bool  # horizon ended before the last round finished


def run_bisection(
    sim,
    targets: tuple[np.ndarray, np.ndarray],
    init_intervals: tuple[list[PriceInterval], list[PriceInterval]],
    alpha: float,
    q_th: int,
    n_samples: int,
    n_rounds: int,
) -> BisectionOutcome:
    """Interval-halving price search against sampled arrival rates.

    Each round posts the midpoints through the slot policy until every
    queue holds ``n_samples`` useful samples (or the horizon ends), then
    halves each interval toward its target rate.  Returns the final
    round's midpoints.
    """
    lam_tg, mu_tg = targets
    ivs_c = list(init_intervals[0])
    ivs_s = list(init_intervals[1])
    mids_c = np.array([iv.midpoint for iv in ivs_c])
    mids_s = np.array([iv.midpoint for iv in ivs_s])
    slots = 0
    for _ in range(n_rounds):
        mids_c = np.array([iv.midpoint for iv in ivs_c])
        mids_s = np.array([iv.midpoint for iv in ivs_s])
        est_c, est_s, used, reached = sim.sample_phase(mids_c, mids_s, alpha, q_th, n_samples)
        slots += used
        if not reached:
            return BisectionOutcome(mids_c, mids_s, slots, True)
        ivs_c = [
            bisection_update(iv, est_c[i], lam_tg[i], "customer") for i, iv in enumerate(ivs_c)
        ]
        ivs_s = [
            bisection_update(iv, est_s[j], mu_tg[j], "server") for j, iv in enumerate(ivs_s)
        ]
    return BisectionOutcome(mids_c, mids_s, slots, False)


class EngineBisectionSim:
    """Adapter running bisection phases through a SlotEngine."""

    def __init__(self, engine: SlotEngine, perturb_prob: float):
        self.engine = engine
        self.perturb_prob = perturb_prob

    def sample_phase(self, mids_c, mids_s, alpha, q_th, n_samples):
        curves = self.engine.curves
        pert_c = np.minimum(mids_c + alpha, [c.p_max for c in curves.demand])
        pert_s = np.maximum(mids_s - alpha, [c.p_min for c in curves.supply])
        prices = PhasePrices.from_prices(curves, mids_c, mids_s, pert_c, pert_s)
        result = self.engine.run_phase(
            prices, self.perturb_prob, q_th, target_useful=n_samples
        )
        n_c = curves.n_customers
        est = result.estimates if result.estimates is not None else np.zeros(len(self.engine.q))
        return est[:n_c], est[n_c:], result.slots_used, result.reached_target


def sample_unit_direction(dim: int, streams: RngStreams) -> np.ndarray:
    """Uniform direction on the unit sphere via normalized gaussians."""
    if dim < 1:
        raise DomainError("dimension must be >= 1")
    while True:
        u = np.array([streams.direction.normal() for _ in range(dim)])
        norm = float(np.linalg.norm(u))
        if norm > 1e-12:
            return u / norm


def gradient_estimate(
    profit_plus: float, profit_minus: float, u: np.ndarray, delta: float, edge_count: int
) -> np.ndarray:
    """Two-point gradient estimator of the fluid objective."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    return (edge_count / (2.0 * delta)) * (profit_plus - profit_minus) * u


@dataclass(frozen=True)
class PolicyConfig:
    """Everything one run of a policy needs besides the seed-independent instance."""

    topology: Topology
    curves: CurveSet
    schedule: Schedule
    horizon: int
    seed: int
    record_trace: bool = False
    check_structure: bool = False
    backend: str | None = None
    x_init: np.ndarray | None = None
    genie_alpha: float | None = None
    zeta: float | None = None


def _estimated_profit(lam, prices_c, mu, prices_s) -> float:
    return float(np.dot(lam, prices_c) - np.dot(mu, prices_s))


def _clipped_interval(center: float, half_width: float, p_min: float, p_max: float) -> PriceInterval:
    lo = min(max(center - half_width, p_min), p_max)
    hi = min(max(center + half_width, p_min), p_max)
    return PriceInterval(lo, hi - lo)


def _initial_intervals(curves: CurveSet, lam, mu, e_c, e_s):
    ivs_c = [
        _clipped_interval(curves.demand[i].price_of_rate(lam[i]), e_c[i], curves.demand[i].p_min, curves.demand[i].p_max)
        for i in range(curves.n_customers)
    ]
    ivs_s = [
        _clipped_interval(curves.supply[j].price_of_rate(mu[j]), e_s[j], curves.supply[j].p_min, curves.supply[j].p_max)
        for j in range(curves.n_servers)
    ]
    return ivs_c, ivs_s


def _trace_from_engine(engine: SlotEngine, config: PolicyConfig, policy: str, outer_iterations: int, final_x=None) -> RunTrace:
    used = engine.cursor
    return RunTrace(
        policy=policy,
        seed=config.seed,
        gamma=config.schedule.gamma,
        horizon=config.horizon,
        instance_key=instance_key(config.topology, config.curves),
        profit_per_slot=engine.profit[:used],
        qlen_per_slot=engine.qlen[:used],
        qmax_per_slot=engine.qmax_series[:used],
        outer_iterations=outer_iterations,
        final_x=final_x,
        arrivals_total=engine.arrivals_cum.copy(),
        matches_total=engine.matches_cum.copy(),
        final_queues=engine.q.copy(),
        structural_violation=engine.structural_violation,
        table=engine.full_trace() if engine.record_trace else None,
    )


def run_learning_policy(config: PolicyConfig, perturb_prob: float = 0.5, policy_name: str = "prob2p") -> RunTrace:
    """Outer gradient-ascent loop over two bisection phases per iteration."""
    topology, curves, schedule = config.topology, config.curves, config.schedule
    anytime = schedule.mode == ANYTIME
    horizon = config.horizon
    engine = SlotEngine(
        topology,
        curves,
        config.seed,
        horizon,
        record_trace=config.record_trace,
        check_structure=config.check_structure,
        backend=config.backend,
    )
    sim = EngineBisectionSim(engine, perturb_prob)
    n_edges = topology.n_edges

    def params_now() -> ScheduleParams:
        scale = engine.now if anytime else horizon
        return schedule_params(schedule, scale, strict=not anytime)

    def build_region(delta: float) -> ShrunkRegion:
        a_min = effective_a_min(topology, schedule.a_min)
        r = inner_radius(topology, a_min)
        return ShrunkRegion(topology, a_min, min(delta, r * (1.0 - 1e-9)))

    params = params_now()
    region = build_region(params.delta)
    x = region.center.copy() if config.x_init is None else np.asarray(config.x_init, dtype=float)
    if not shrunk_contains(region, topology, x):
        raise ConfigurationError("initial matching rates lie outside the shrunk region")
    e_c, e_s = compute_margins(
        topology, curves, params.eta, params.epsilon, region.delta, schedule.e_override_mult
    )
    lam0, mu0 = induced_rates(topology, x)
    init_ivs = _initial_intervals(curves, lam0, mu0, e_c, e_s)
    prev_prices: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    x_history = [x.copy()]

    outer_done = 0
    while not engine.exhausted:
        params = params_now()
        region = build_region(params.delta)
        delta = region.delta
        e_c, e_s = compute_margins(
            topology, curves, params.eta, params.epsilon, delta, schedule.e_override_mult
        )
        u = sample_unit_direction(n_edges, engine.streams)
        phase_out: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        partial = False
        for sign, label in ((1.0, "plus"), (-1.0, "minus")):
            x_pt = x + sign * delta * u
            lam, mu = induced_rates(topology, x_pt)
            lam = np.clip(lam, 0.0, 1.0)
            mu = np.clip(mu, 0.0, 1.0)
            if label in prev_prices:
                pc, ps = prev_prices[label]
                ivs = (
                    [
                        _clipped_interval(pc[i], e_c[i], curves.demand[i].p_min, curves.demand[i].p_max)
                        for i in range(curves.n_customers)
                    ],
                    [
                        _clipped_interval(ps[j], e_s[j], curves.supply[j].p_min, curves.supply[j].p_max)
                        for j in range(curves.n_servers)
                    ],
                )
            else:
                ivs = init_ivs
            out = run_bisection(
                sim, (lam, mu), ivs, params.alpha, params.q_th, params.n_samples, params.n_rounds
            )
            if out.partial:
                partial = True
                break
            prev_prices[label] = (out.prices_c, out.prices_s)
            phase_out[label] = (lam, mu, out.prices_c, out.prices_s)
        if partial or len(phase_out) < 2:
            break
        lam_p, mu_p, pc_p, ps_p = phase_out["plus"]
        lam_m, mu_m, pc_m, ps_m = phase_out["minus"]
        g = gradient_estimate(
            _estimated_profit(lam_p, pc_p, mu_p, ps_p),
            _estimated_profit(lam_m, pc_m, mu_m, ps_m),
            u,
            delta,
            n_edges,
        )
        x = project_to_shrunk(region, topology, x + params.eta * g)
        x_history.append(x.copy())
        outer_done += 1

    trace = _trace_from_engine(engine, config, policy_name, outer_done, final_x=x)
    trace.x_history = x_history
    return trace


def run_threshold_policy(config: PolicyConfig) -> RunTrace:
    """Learning stack with the perturbation branch removed."""
    return run_learning_policy(config, perturb_prob=0.0, policy_name="threshold")


def run_genie_policy(config: PolicyConfig, fluid: FluidSolution | None = None) -> RunTrace:
    """Two-price policy around the known fluid optimum."""
    topology, curves, schedule = config.topology, config.curves, config.schedule
    if fluid is None:
        fluid = solve_fluid(topology, curves, schedule.a_min)
    engine = SlotEngine(
        topology,
        curves,
        config.seed,
        config.horizon,
        record_trace=config.record_trace,
        check_structure=config.check_structure,
        backend=config.backend,
    )
    base_c = np.array([curves.demand[i].price_of_rate(fluid.lambda_star[i]) for i in range(curves.n_customers)])
    base_s = np.array([curves.supply[j].price_of_rate(fluid.mu_star[j]) for j in range(curves.n_servers)])
    anytime = schedule.mode == ANYTIME

    def alpha_now() -> float:
        if config.genie_alpha is not None:
            return config.genie_alpha
        scale = engine.now if anytime else config.horizon
        return schedule_params(schedule, scale, strict=False).alpha

    # Anytime alpha drifts slowly; re-evaluate on doubling chunk boundaries so
    # prices stay constant within a kernel phase.
    next_boundary = 2
    while not engine.exhausted:
        alpha_bar = alpha_now()
        pert_c = np.array(
            [curves.demand[i].price_of_rate(max(fluid.lambda_star[i] - alpha_bar, 0.0)) for i in range(curves.n_customers)]
        )
        pert_s = np.array(
            [curves.supply[j].price_of_rate(max(fluid.mu_star[j] - alpha_bar, 0.0)) for j in range(curves.n_servers)]
        )
        prices = PhasePrices.from_prices(curves, base_c, base_s, pert_c, pert_s)
        if anytime and config.genie_alpha is None:
            budget = max(1, next_boundary - engine.now + 1)
            next_boundary *= 2
        else:
            budget = config.horizon
        engine.run_phase(prices, psi=1.0, q_th=_NO_THRESHOLD, max_slots=budget)
    return _trace_from_engine(engine, config, "genie2p", 0)


def run_estimate_then_optimize(config: PolicyConfig) -> RunTrace:
    """Explore a uniform price grid, fit curves, then price statically.

    The exploration posts each grid price for a fixed block with no queue
    control, so imbalanced rates pile up inventory; that failure mode is
    the point of the strawman.
    """
    from .curves import PiecewiseLinearCurve  # local: avoid import cycle at module load

    topology, curves = config.topology, config.curves
    horizon = config.horizon
    zeta = config.zeta if config.zeta is not None else horizon ** (-0.25)
    if not 0.0 < zeta <= 1.0:
        raise ConfigurationError(f"zeta must lie in (0, 1], got {zeta}")
    n_prices = math.ceil(1.0 / zeta)
    n_rep = math.ceil(1.0 / zeta**2)
    engine = SlotEngine(
        topology,
        curves,
        config.seed,
        horizon,
        record_trace=config.record_trace,
        check_structure=config.check_structure,
        backend=config.backend,
    )

    def grid(curve) -> np.ndarray:
        if n_prices == 1:
            return np.array([(curve.p_min + curve.p_max) / 2.0])
        return np.linspace(curve.p_min, curve.p_max, n_prices)

    grids_c = [grid(c) for c in curves.demand]
    grids_s = [grid(c) for c in curves.supply]
    means_c = np.zeros((curves.n_customers, n_prices))
    means_s = np.zeros((curves.n_servers, n_prices))
    for g in range(n_prices):
        pc = np.array([grids_c[i][g] for i in range(curves.n_customers)])
        ps = np.array([grids_s[j][g] for j in range(curves.n_servers)])
        prices = PhasePrices.from_prices(curves, pc, ps)
        result = engine.run_phase(
            prices, psi=0.0, q_th=_NO_THRESHOLD, target_useful=n_rep, max_slots=n_rep
        )
        if result.estimates is not None:
            means_c[:, g] = result.estimates[: curves.n_customers]
            means_s[:, g] = result.estimates[curves.n_customers:]
        if engine.exhausted:
            return _trace_from_engine(engine, config, "eto", 0)

    exploration_end = engine.cursor
    if n_prices >= 2:
        est_curves = CurveSet(
            demand=tuple(
                PiecewiseLinearCurve.from_samples("demand", grids_c[i], means_c[i])
                for i in range(curves.n_customers)
            ),
            supply=tuple(
                PiecewiseLinearCurve.from_samples("supply", grids_s[j], means_s[j])
                for j in range(curves.n_servers)
            ),
        )
        x_hat = _solve_fluid_approx(topology, est_curves)
        lam_hat, mu_hat = induced_rates(topology, x_hat)
        static_c = np.array(
            [est_curves.demand[i].price_of_rate(min(max(lam_hat[i], 0.0), 1.0)) for i in range(curves.n_customers)]
        )
        static_s = np.array(
            [est_curves.supply[j].price_of_rate(min(max(mu_hat[j], 0.0), 1.0)) for j in range(curves.n_servers)]
        )
        # estimated prices stay inside the true bounds: the grids span them
        static_c = np.clip(static_c, [c.p_min for c in curves.demand], [c.p_max for c in curves.demand])
        static_s = np.clip(static_s, [c.p_min for c in curves.supply], [c.p_max for c in curves.supply])
    else:
        static_c = np.array([grids_c[i][0] for i in range(curves.n_customers)])
        static_s = np.array([grids_s[j][0] for j in range(curves.n_servers)])
    prices = PhasePrices.from_prices(curves, static_c, static_s)
    while not engine.exhausted:
        engine.run_phase(prices, psi=0.0, q_th=_NO_THRESHOLD)
    trace = _trace_from_engine(engine, config, "eto", 0)
    trace.exploration_slots = exploration_end
    return trace


def _solve_fluid_approx(topology: Topology, curves: CurveSet, iters: int = 2000) -> np.ndarray:
    """Projected gradient on an estimated objective; best iterate wins.

    Estimated curves are piecewise linear, so no smoothness is assumed and
    no convergence is certified; the strawman only needs a reasonable point.
    """
    from .fluid import _gradient, _region_center, fluid_objective, project_polyhedron

    n_e = topology.n_edges
    rows, rhs = [], []
    for e in range(n_e):
        row = np.zeros(n_e)
        row[e] = -1.0
        rows.append(row)
        rhs.append(0.0)
    for adj in list(topology.customer_adj) + list(topology.server_adj):
        row = np.zeros(n_e)
        row[[e for _, e in adj]] = 1.0
        rows.append(row)
        rhs.append(1.0)
    a_mat, b_vec = np.array(rows), np.array(rhs)
    x = _region_center(topology, 0.01)
    best_x, best_f = x.copy(), fluid_objective(topology, curves, x)
    for k in range(1, iters + 1):
        g = _gradient(topology, curves, x)
        x = project_polyhedron(x + 0.1 / math.sqrt(k) * g, a_mat, b_vec, x)
        f = fluid_objective(topology, curves, x)
        if f > best_f:
            best_x, best_f = x.copy(), f
    return best_x


POLICY_RUNNERS = {
    "prob2p": lambda cfg: run_learning_policy(cfg, 0.5, "prob2p"),
    "threshold": run_threshold_policy,
    "genie2p": run_genie_policy,
    "eto": run_estimate_then_optimize,
}


def run_policy(name: str, config: PolicyConfig) -> RunTrace:
    try:
        runner = POLICY_RUNNERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown policy {name!r}") from None
    return runner(config)
