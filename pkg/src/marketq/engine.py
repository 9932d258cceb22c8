"""Backend selection and the phase-level simulation driver.

The compiled kernel is used when importable; the pure-Python twin
otherwise.  ``MARKETQ_BACKEND=python|compiled`` forces a choice.  A phase
is a maximal stretch of slots during which every queue's three candidate
prices stay fixed, which is exactly the granularity of the pricing
algorithms; the kernel runs whole phases without returning to Python.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .curves import CurveSet
from .errors import ConfigurationError
from .fluid import Topology
from .queueing import FullTrace
from .rng import RngStreams

from . import _kernel_py

try:
    from . import _kernel  # compiled extension, built by setup.py
except ImportError:  # pragma: no cover - depends on the build environment
    _kernel = None


def get_backend(name: str | None = None):
    name = name or os.environ.get("MARKETQ_BACKEND")
    if name in (None, "", "auto"):
        return _kernel if _kernel is not None else _kernel_py
    if name == "python":
        return _kernel_py
    if name == "compiled":
        if _kernel is None:
            raise ConfigurationError("compiled kernel requested but not built")
        return _kernel
    raise ConfigurationError(f"unknown backend {name!r}")


def active_backend_name() -> str:
    return get_backend().BACKEND_NAME


@dataclass(frozen=True)
class KernelTopology:
    """Flat adjacency arrays in the layout the kernels consume."""

    n_customers: int
    n_servers: int
    c_indptr: np.ndarray
    c_nbr: np.ndarray
    c_edge: np.ndarray
    s_indptr: np.ndarray
    s_nbr: np.ndarray
    s_edge: np.ndarray
    edge_cust: np.ndarray
    edge_srv: np.ndarray

    @classmethod
    def build(cls, topology: Topology) -> "KernelTopology":
        def csr(adj_lists):
            indptr = [0]
            nbr, edge = [], []
            for adj in adj_lists:
                for other, e in adj:  # already sorted by opposite index
                    nbr.append(other)
                    edge.append(e)
                indptr.append(len(nbr))
            return (
                np.array(indptr, dtype=np.int64),
                np.array(nbr, dtype=np.int64),
                np.array(edge, dtype=np.int64),
            )

        cip, cnb, ced = csr(topology.customer_adj)
        sip, snb, sed = csr(topology.server_adj)
        return cls(
            n_customers=topology.n_customers,
            n_servers=topology.n_servers,
            c_indptr=cip,
            c_nbr=cnb,
            c_edge=ced,
            s_indptr=sip,
            s_nbr=snb,
            s_edge=sed,
            edge_cust=np.array([i for i, _ in topology.edges], dtype=np.int64),
            edge_srv=np.array([j for _, j in topology.edges], dtype=np.int64),
        )


@dataclass
class PhasePrices:
    """The three candidate prices (and induced rates) per queue for one phase.

    base: posted at empty queues and as the unperturbed choice;
    pert: the rate-reducing alternative; extreme: the rejection price.
    Arrays are over all queues, customers first.
    """

    price_base: np.ndarray
    price_pert: np.ndarray
    price_extreme: np.ndarray
    rate_base: np.ndarray
    rate_pert: np.ndarray
    rate_extreme: np.ndarray

    @classmethod
    def from_prices(
        cls,
        curves: CurveSet,
        base_c: np.ndarray,
        base_s: np.ndarray,
        pert_c: np.ndarray | None = None,
        pert_s: np.ndarray | None = None,
    ) -> "PhasePrices":
        """Build the table from per-side price vectors; extremes reject arrivals."""
        n_c, n_s = curves.n_customers, curves.n_servers
        pb = np.concatenate([base_c, base_s]).astype(float)
        pp = pb.copy()
        if pert_c is not None:
            pp[:n_c] = pert_c
        if pert_s is not None:
            pp[n_c:] = pert_s
        pe = np.array(
            [curves.demand[i].p_max for i in range(n_c)]
            + [curves.supply[j].p_min for j in range(n_s)]
        )
        all_curves = list(curves.demand) + list(curves.supply)
        rb = np.array([c.rate_of_price(p) for c, p in zip(all_curves, pb)])
        rp = np.array([c.rate_of_price(p) for c, p in zip(all_curves, pp)])
        re = np.array([c.rate_of_price(p) for c, p in zip(all_curves, pe)])
        return cls(pb, pp, pe, rb, rp, re)


@dataclass
class PhaseResult:
    slots_used: int
    reached_target: bool
    estimates: np.ndarray | None  # per-queue rate estimates when a target was set
    exhausted: bool


class SlotEngine:
    """Owns queue state, RNG streams and per-slot recordings for one run."""

    def __init__(
        self,
        topology: Topology,
        curves: CurveSet,
        seed: int,
        horizon: int,
        record_trace: bool = False,
        check_structure: bool = False,
        backend: str | None = None,
    ):
        self.topology = topology
        self.curves = curves
        self.horizon = int(horizon)
        self.kt = KernelTopology.build(topology)
        self.streams = RngStreams(seed, topology.n_customers, topology.n_servers)
        n_q = topology.n_customers + topology.n_servers
        n_e = topology.n_edges
        self.q = np.zeros(n_q, dtype=np.int64)
        self.profit = np.zeros(self.horizon)
        self.qlen = np.zeros(self.horizon, dtype=np.int64)
        self.qmax_series = np.zeros(self.horizon, dtype=np.int64)
        self.arrivals_cum = np.zeros(n_q, dtype=np.int64)
        self.matches_cum = np.zeros(n_e, dtype=np.int64)
        self.cursor = 0
        self.qmax = 0
        self.check_structure = check_structure
        self.structural_violation: int | None = None
        self._backend = get_backend(backend)
        self._n_useful = np.zeros(n_q, dtype=np.int64)
        self._sample_sum = np.zeros(n_q, dtype=np.int64)
        self.record_trace = record_trace
        if record_trace:
            self.trace_price = np.zeros((self.horizon, n_q))
            self.trace_rate = np.zeros((self.horizon, n_q))
            self.trace_arrival = np.zeros((self.horizon, n_q), dtype=np.int8)
            self.trace_useful = np.zeros((self.horizon, n_q), dtype=np.int8)
            self.trace_match = np.zeros((self.horizon, n_e), dtype=np.int64)
        else:
            self.trace_price = np.zeros((1, 1))
            self.trace_rate = np.zeros((1, 1))
            self.trace_arrival = np.zeros((1, 1), dtype=np.int8)
            self.trace_useful = np.zeros((1, 1), dtype=np.int8)
            self.trace_match = np.zeros((1, 1), dtype=np.int64)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.horizon

    @property
    def now(self) -> int:
        """1-based index of the next slot to run."""
        return self.cursor + 1

    def run_phase(
        self,
        prices: PhasePrices,
        psi: float,
        q_th: int,
        target_useful: int = 0,
        max_slots: int | None = None,
    ) -> PhaseResult:
        budget = self.horizon - self.cursor
        if max_slots is not None:
            budget = min(budget, int(max_slots))
        if budget <= 0:
            return PhaseResult(0, False, None, True)
        kt = self.kt
        self._n_useful[:] = 0
        self._sample_sum[:] = 0
        lo, hi = self.cursor, self.cursor + budget
        if self.record_trace:
            tp, tr = self.trace_price[lo:hi], self.trace_rate[lo:hi]
            ta, tu = self.trace_arrival[lo:hi], self.trace_useful[lo:hi]
            tm = self.trace_match[lo:hi]
        else:
            tp, tr, ta, tu, tm = (
                self.trace_price,
                self.trace_rate,
                self.trace_arrival,
                self.trace_useful,
                self.trace_match,
            )
        used, reached, qmax, bad_slot = self._backend.run_phase(
            kt.n_customers,
            kt.n_servers,
            kt.c_indptr,
            kt.c_nbr,
            kt.c_edge,
            kt.s_indptr,
            kt.s_nbr,
            kt.s_edge,
            kt.edge_cust,
            kt.edge_srv,
            self.q,
            self.streams.arrival_state,
            self.streams.coin_state,
            prices.rate_base,
            prices.rate_pert,
            prices.rate_extreme,
            prices.price_base,
            prices.price_pert,
            prices.price_extreme,
            float(psi),
            int(q_th),
            int(target_useful),
            budget,
            self._n_useful,
            self._sample_sum,
            self.arrivals_cum,
            self.matches_cum,
            self.profit[lo:hi],
            self.qlen[lo:hi],
            self.qmax_series[lo:hi],
            self.qmax,
            1 if self.check_structure else 0,
            tp,
            tr,
            ta,
            tu,
            tm,
            1 if self.record_trace else 0,
        )
        self.cursor += used
        self.qmax = qmax
        if bad_slot >= 0 and self.structural_violation is None:
            self.structural_violation = lo + bad_slot
        estimates = None
        if target_useful > 0:
            denom = np.maximum(np.minimum(self._n_useful, target_useful), 1)
            estimates = self._sample_sum / denom
        return PhaseResult(used, reached, estimates, self.exhausted)

    def full_trace(self) -> FullTrace:
        if not self.record_trace:
            raise ConfigurationError("engine was created without record_trace")
        t = self.cursor
        n_c = self.topology.n_customers
        q_len = np.zeros((t, len(self.q)), dtype=np.int64)
        # reconstruct post-slot lengths from arrivals and matches
        run = np.zeros(len(self.q), dtype=np.int64)
        for s in range(t):
            run += self.trace_arrival[s]
            for e, (i, j) in enumerate(self.topology.edges):
                m = self.trace_match[s, e]
                run[i] -= m
                run[n_c + j] -= m
            q_len[s] = run
        return FullTrace(
            topology=self.topology,
            prices=self.trace_price[:t].copy(),
            rates=self.trace_rate[:t].copy(),
            arrivals=self.trace_arrival[:t].copy(),
            useful=self.trace_useful[:t].copy(),
            matches=self.trace_match[:t].copy(),
            q_len=q_len,
        )
