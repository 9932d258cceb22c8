"""Discrete-time two-sided queue dynamics.

Bernoulli arrivals per queue per slot; every arrival is matched
immediately against the longest nonempty compatible opposite queue or
joins its own queue.  These reference functions define the semantics the
simulation kernels replicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fluid import Topology
from .rng import RngStreams


@dataclass
class QueueState:
    q_c: np.ndarray
    q_s: np.ndarray
    t: int = 1

    @classmethod
    def empty(cls, topology: Topology) -> "QueueState":
        return cls(
            q_c=np.zeros(topology.n_customers, dtype=np.int64),
            q_s=np.zeros(topology.n_servers, dtype=np.int64),
        )


@dataclass
class SlotOutcome:
    arrivals_c: np.ndarray
    arrivals_s: np.ndarray
    matches: np.ndarray  # per-edge counts, 0..2
    rates_set: tuple[np.ndarray, np.ndarray]
    prices_set: tuple[np.ndarray, np.ndarray]
    useful_flags: tuple[np.ndarray, np.ndarray] | None = None


def sample_arrivals(rates: tuple[np.ndarray, np.ndarray], streams: RngStreams) -> tuple[np.ndarray, np.ndarray]:
    """One Bernoulli indicator per queue, customers first, from that queue's substream."""
    lam, mu = rates
    if np.any(lam < 0) or np.any(lam > 1) or np.any(mu < 0) or np.any(mu > 1):
        raise DomainError("arrival rates must lie in [0, 1]")
    arrivals_c = np.zeros(len(lam), dtype=np.int64)
    arrivals_s = np.zeros(len(mu), dtype=np.int64)
    for i in range(len(lam)):
        arrivals_c[i] = 1 if streams.arrival_stream(i).uniform() < lam[i] else 0
    for j in range(len(mu)):
        arrivals_s[j] = 1 if streams.arrival_stream(len(lam) + j).uniform() < mu[j] else 0
    return arrivals_c, arrivals_s


def match_step(
    state: QueueState, arrivals: tuple[np.ndarray, np.ndarray], topology: Topology
) -> tuple[QueueState, np.ndarray]:
    """Process one slot's arrivals in fixed order, matching greedily.

    Customers 1..I then servers 1..J; each arrival goes to the longest
    nonempty compatible opposite queue (ties to the lowest index) and both
    parties leave, otherwise it joins its own queue.  Queue lengths update
    in place as matches occur, so a same-slot arrival can absorb a later one.
    """
    arrivals_c, arrivals_s = arrivals
    matches = np.zeros(topology.n_edges, dtype=np.int64)
    for i in range(topology.n_customers):
        if not arrivals_c[i]:
            continue
        best_edge, best_len = -1, 0
        for j, e in topology.customer_adj[i]:
            if state.q_s[j] > best_len:
                best_len, best_edge = state.q_s[j], e
        if best_edge >= 0:
            state.q_s[topology.edges[best_edge][1]] -= 1
            matches[best_edge] += 1
        else:
            state.q_c[i] += 1
    for j in range(topology.n_servers):
        if not arrivals_s[j]:
            continue
        best_edge, best_len = -1, 0
        for i, e in topology.server_adj[j]:
            if state.q_c[i] > best_len:
                best_len, best_edge = state.q_c[i], e
        if best_edge >= 0:
            state.q_c[topology.edges[best_edge][0]] -= 1
            matches[best_edge] += 1
        else:
            state.q_s[j] += 1
    return state, matches


def structural_ok(state: QueueState, topology: Topology) -> bool:
    """Both endpoints of an edge never hold inventory at a slot boundary."""
    for i, j in topology.edges:
        if state.q_c[i] > 0 and state.q_s[j] > 0:
            return False
    return True


@dataclass
class FullTrace:
    """Per-slot detail kept only when tracing is requested."""

    topology: Topology
    prices: np.ndarray  # (T, Q) posted prices, customers first
    rates: np.ndarray  # (T, Q)
    arrivals: np.ndarray  # (T, Q) 0/1
    useful: np.ndarray  # (T, Q) 0/1
    matches: np.ndarray  # (T, E)
    q_len: np.ndarray = field(default=None)  # (T, Q) post-slot lengths


def conservation_check(trace: FullTrace) -> tuple[bool, int | None]:
    """Arrivals minus matched departures must reproduce every queue length.

    Returns (True, None) on success, else (False, first offending slot).
    """
    top = trace.topology
    n_c = top.n_customers
    q = np.zeros(n_c + top.n_servers, dtype=np.int64)
    for t in range(trace.arrivals.shape[0]):
        q += trace.arrivals[t]
        for e, (i, j) in enumerate(top.edges):
            m = trace.matches[t, e]
            q[i] -= m
            q[n_c + j] -= m
        if trace.q_len is not None and not np.array_equal(q, trace.q_len[t]):
            return False, t
        if np.any(q < 0):
            return False, t
    return True, None
