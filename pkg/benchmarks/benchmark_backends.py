"""Benchmark the compiled kernel against the pure-Python twin.

Runs the same probabilistic two-price phases through both backends,
verifies the outputs are bit-identical, and reports slots/second.

    python benchmarks/benchmark_backends.py [--slots N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from marketq import CurveSet, LinearCurve, Topology
from marketq.engine import PhasePrices, SlotEngine, get_backend


def build_instance():
    edges = ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 1), (2, 2))
    topology = Topology(3, 3, edges)
    curves = CurveSet(
        demand=tuple(LinearCurve("demand", 2.0, 2.0) for _ in range(3)),
        supply=tuple(LinearCurve("supply", 0.0, 2.0) for _ in range(3)),
    )
    return topology, curves


def run(backend: str, slots: int):
    topology, curves = build_instance()
    engine = SlotEngine(topology, curves, seed=0, horizon=slots, backend=backend)
    mids_c = np.array([1.4, 1.5, 1.45])
    mids_s = np.array([0.55, 0.5, 0.6])
    pert_c = np.minimum(mids_c + 0.2, 2.0)
    pert_s = np.maximum(mids_s - 0.2, 0.0)
    prices = PhasePrices.from_prices(curves, mids_c, mids_s, pert_c, pert_s)
    start = time.perf_counter()
    while not engine.exhausted:
        engine.run_phase(prices, psi=0.5, q_th=8, target_useful=500)
    elapsed = time.perf_counter() - start
    return elapsed, engine.profit.copy(), engine.qlen.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--slots", type=int, default=2_000_000)
    args = parser.parse_args()

    backends = ["python"]
    try:
        get_backend("compiled")
        backends.insert(0, "compiled")
    except Exception:
        print("compiled kernel not built; benchmarking the python backend only")

    results = {}
    for name in backends:
        elapsed, profit, qlen = run(name, args.slots)
        results[name] = (elapsed, profit, qlen)
        print(f"{name:9s}: {args.slots / elapsed / 1e6:8.2f} M slots/s  ({elapsed:.2f}s for {args.slots} slots)")

    if len(results) == 2:
        (e_c, p_c, q_c), (e_p, p_p, q_p) = results["compiled"], results["python"]
        identical = np.array_equal(p_c, p_p) and np.array_equal(q_c, q_p)
        print(f"outputs bit-identical: {identical}")
        print(f"speedup: {e_p / e_c:.1f}x")
        if not identical:
            raise SystemExit("backends disagree")


if __name__ == "__main__":
    main()
