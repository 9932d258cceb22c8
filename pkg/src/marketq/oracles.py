"""Independent brute-force and analytic validators.

These back the tests and the ``validate`` CLI subcommand; they stay
deliberately separate from the implementations they check.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DomainError
from .fluid import ShrunkRegion, Topology, shrunk_contains
from .rng import Stream, derive_state


@dataclass
class GridOracleResult:
    argmin: np.ndarray
    value: float
    step: float


class FeasibleGrid:
    """Exhaustive grid enumeration of a low-dimensional shrunk region."""

    def __init__(self, region: ShrunkRegion, step: float = 1e-3):
        n_e = region.topology.n_edges
        if n_e > 2:
            raise DomainError("grid oracle supports at most 2 edges")
        if step > 1e-3 + 1e-15:
            raise DomainError("grid step must be at most 1e-3")
        self.region = region
        self.step = step
        axes = [np.arange(0.0, 1.0 + step / 2, step) for _ in range(n_e)]
        if n_e == 1:
            pts = axes[0][:, None]
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            pts = np.column_stack([g0.ravel(), g1.ravel()])
        keep = np.array(
            [shrunk_contains(region, region.topology, p) for p in pts], dtype=bool
        )
        self.points = pts[keep]
        if len(self.points) == 0:
            raise DomainError("region contains no grid point at this step")

    def project(self, x: np.ndarray) -> GridOracleResult:
        x = np.asarray(x, dtype=float)
        d2 = ((self.points - x) ** 2).sum(axis=1)
        k = int(np.argmin(d2))
        return GridOracleResult(self.points[k].copy(), float(np.sqrt(d2[k])), self.step)


def grid_project(region: ShrunkRegion, topology: Topology, x: np.ndarray, step: float = 1e-3) -> GridOracleResult:
    """Nearest feasible grid point in Euclidean norm (|E| <= 2 only)."""
    return FeasibleGrid(region, step).project(x)


def transportation_feasible(topology: Topology, lam: np.ndarray, mu: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether nonnegative edge rates supported on the graph hit both marginals.

    Checked through the cut condition: every customer subset's demand must
    be covered by the supply of its neighborhood (and symmetrically), with
    balanced totals.  Exact for the small graphs this library targets.
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if abs(lam.sum() - mu.sum()) > tol:
        raise DomainError("marginals must have equal totals")
    if np.any(lam < -tol) or np.any(mu < -tol):
        return False
    n_c = topology.n_customers
    if n_c > 20:
        raise DomainError("cut enumeration limited to 20 customer types")
    neighbors = [set(j for j, _ in topology.customer_adj[i]) for i in range(n_c)]
    for size in range(1, n_c + 1):
        for subset in combinations(range(n_c), size):
            demand = sum(lam[i] for i in subset)
            hood = set().union(*(neighbors[i] for i in subset))
            supply = sum(mu[j] for j in hood)
            if demand > supply + tol:
                return False
    return True


class DeterministicRateSim:
    """Bisection stub whose sample means are the exact curve rates.

    Isolates the interval-halving contraction from sampling noise; consumes
    no simulated time.
    """

    def __init__(self, curves):
        self.curves = curves

    def sample_phase(self, mids_c, mids_s, alpha, q_th, n_samples):
        est_c = np.array(
            [c.rate_of_price(p) for c, p in zip(self.curves.demand, mids_c)]
        )
        est_s = np.array(
            [c.rate_of_price(p) for c, p in zip(self.curves.supply, mids_s)]
        )
        return est_c, est_s, 0, True


def wald_count_check(n_samples: int, trials: int, seed: int = 0, keep_prob: float = 0.5) -> float:
    """Mean slots needed to collect ``n_samples`` useful samples.

    Mimics one queue pinned strictly between empty and the threshold, where
    each slot keeps its sample only when the perturbation coin says so.
    ``keep_prob=1`` reduces to exactly ``n_samples`` slots.
    """
    total = 0
    for trial in range(trials):
        stream = Stream(derive_state(seed, 9000, trial))
        kept = 0
        slots = 0
        while kept < n_samples:
            slots += 1
            if not (stream.uniform() < 1.0 - keep_prob):
                kept += 1
        total += slots
    return total / trials
