"""Learning-based dynamic pricing and matching for two-sided queueing networks."""

from .curves import Curve, CurveSet, LinearCurve, PiecewiseLinearCurve
from .engine import SlotEngine, active_backend_name
from .errors import ConfigurationError, DomainError, NumericalError
from .fluid import (
    FluidSolution,
    ShrunkRegion,
    Topology,
    fluid_objective,
    induced_rates,
    inner_radius,
    project_to_shrunk,
    shrunk_contains,
    solve_fluid,
)
from .harness import ExperimentConfig, load_config, run_experiment, validate_config
from .metrics import (
    RunSummary,
    RunTrace,
    combined_objective,
    confidence_interval,
    expected_profit,
    improvement_pct,
    queue_metrics,
    regret,
    tradeoff_fit,
)
from .policies import (
    PolicyConfig,
    Schedule,
    compute_margins,
    gradient_estimate,
    run_bisection,
    run_learning_policy,
    run_policy,
    sample_unit_direction,
    schedule_params,
)
from .queueing import QueueState, conservation_check, match_step, sample_arrivals
from .rng import RngStreams

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "Curve",
    "CurveSet",
    "DomainError",
    "ExperimentConfig",
    "FluidSolution",
    "LinearCurve",
    "NumericalError",
    "PiecewiseLinearCurve",
    "PolicyConfig",
    "QueueState",
    "RngStreams",
    "RunSummary",
    "RunTrace",
    "Schedule",
    "ShrunkRegion",
    "SlotEngine",
    "Topology",
    "active_backend_name",
    "combined_objective",
    "compute_margins",
    "confidence_interval",
    "conservation_check",
    "expected_profit",
    "fluid_objective",
    "gradient_estimate",
    "improvement_pct",
    "induced_rates",
    "inner_radius",
    "load_config",
    "match_step",
    "project_to_shrunk",
    "queue_metrics",
    "regret",
    "run_bisection",
    "run_experiment",
    "run_learning_policy",
    "run_policy",
    "sample_arrivals",
    "sample_unit_direction",
    "schedule_params",
    "shrunk_contains",
    "solve_fluid",
    "tradeoff_fit",
    "validate_config",
]
