from __future__ import annotations

import numpy as np
import pytest

from marketq import CurveSet, LinearCurve, Schedule, Topology


@pytest.fixture
def single_link():
    topology = Topology(1, 1, ((0, 0),))
    curves = CurveSet(
        demand=(LinearCurve("demand", 2.0, 2.0),),
        supply=(LinearCurve("supply", 0.0, 2.0),),
    )
    return topology, curves


@pytest.fixture
def two_edge():
    topology = Topology(1, 2, ((0, 0), (0, 1)))
    curves = CurveSet(
        demand=(LinearCurve("demand", 2.0, 2.0),),
        supply=(LinearCurve("supply", 0.0, 2.0), LinearCurve("supply", 0.0, 2.0)),
    )
    return topology, curves


@pytest.fixture
def multi_link():
    edges = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 1), (2, 2))
    topology = Topology(3, 3, edges)
    curves = CurveSet(
        demand=tuple(LinearCurve("demand", 2.0, 2.0) for _ in range(3)),
        supply=tuple(LinearCurve("supply", 0.0, 2.0) for _ in range(3)),
    )
    return topology, curves


@pytest.fixture
def paper_schedule():
    return Schedule(
        gamma=1.0 / 6.0,
        mode="anytime",
        eta_mult=0.2,
        delta_mult=0.2,
        alpha_mult=0.2,
        e_override_mult=6.0,
        beta=1.0,
        a_min=0.01,
    )


def random_feasible(region, topology, rng, n):
    """Random points of the shrunk region via projection of box samples."""
    from marketq import project_to_shrunk

    pts = []
    for _ in range(n):
        pts.append(project_to_shrunk(region, topology, rng.uniform(0, 1, topology.n_edges)))
    return np.array(pts)
