from __future__ import annotations

import numpy as np
import pytest

from marketq import QueueState, RngStreams
from marketq.engine import PhasePrices, SlotEngine, get_backend
from marketq.policies import PolicyConfig, prob_two_price_decide, run_policy
from marketq.queueing import conservation_check, match_step, sample_arrivals

HAS_COMPILED = get_backend("auto").BACKEND_NAME == "compiled"


def _phase_prices(curves, mid_c, mid_s, alpha):
    pert_c = np.minimum(mid_c + alpha, [c.p_max for c in curves.demand])
    pert_s = np.maximum(mid_s - alpha, [c.p_min for c in curves.supply])
    return PhasePrices.from_prices(curves, mid_c, mid_s, pert_c, pert_s)


def test_kernel_matches_readable_reference(multi_link):
    """The kernel phase must equal a slot-by-slot replay built from the
    documented per-slot operations (decide, sample, match)."""
    topology, curves = multi_link
    seed, alpha, q_th, target = 5, 0.3, 3, 50
    mid_c = np.array([1.2, 1.4, 1.1])
    mid_s = np.array([0.6, 0.8, 0.5])

    engine = SlotEngine(topology, curves, seed, horizon=100_000)
    res = engine.run_phase(_phase_prices(curves, mid_c, mid_s, alpha), 0.5, q_th, target_useful=target)
    assert res.reached_target

    streams = RngStreams(seed, 3, 3)
    state = QueueState(np.zeros(3, dtype=np.int64), np.zeros(3, dtype=np.int64))
    n_useful = np.zeros(6, dtype=int)
    sample_sum = np.zeros(6, dtype=int)
    profits, qlens = [], []
    while True:
        decision = prob_two_price_decide(state, (mid_c, mid_s), alpha, q_th, streams, curves)
        lam = np.array([curves.demand[i].rate_of_price(p) for i, p in enumerate(decision.prices_c)])
        mu = np.array([curves.supply[j].rate_of_price(p) for j, p in enumerate(decision.prices_s)])
        arr_c, arr_s = sample_arrivals((lam, mu), streams)
        useful = np.concatenate([decision.useful_c, decision.useful_s])
        arrivals = np.concatenate([arr_c, arr_s])
        for k in range(6):
            if useful[k]:
                n_useful[k] += 1
                if n_useful[k] <= target:
                    sample_sum[k] += arrivals[k]
        profit = 0.0  # accumulate in queue order, like the kernel
        for i in range(3):
            profit += lam[i] * decision.prices_c[i]
        for j in range(3):
            profit -= mu[j] * decision.prices_s[j]
        profits.append(profit)
        state, _ = match_step(state, (arr_c, arr_s), topology)
        qlens.append(int(state.q_c.sum() + state.q_s.sum()))
        if np.all(n_useful >= target):
            break

    assert res.slots_used == len(profits)
    assert np.array_equal(engine.profit[: res.slots_used], np.array(profits))
    assert np.array_equal(engine.qlen[: res.slots_used], np.array(qlens))
    assert np.array_equal(res.estimates, sample_sum / target)
    assert np.array_equal(engine.q, np.concatenate([state.q_c, state.q_s]))


@pytest.mark.skipif(not HAS_COMPILED, reason="compiled kernel unavailable")
@pytest.mark.parametrize("policy", ["prob2p", "threshold", "genie2p", "eto"])
def test_backends_bit_identical(policy, single_link, paper_schedule):
    topology, curves = single_link
    traces = {}
    for backend in ("compiled", "python"):
        cfg = PolicyConfig(topology, curves, paper_schedule, 15_000, 9, backend=backend)
        traces[backend] = run_policy(policy, cfg)
    a, b = traces["compiled"], traces["python"]
    assert np.array_equal(a.profit_per_slot, b.profit_per_slot)
    assert np.array_equal(a.qlen_per_slot, b.qlen_per_slot)
    assert np.array_equal(a.qmax_per_slot, b.qmax_per_slot)
    assert np.array_equal(a.arrivals_total, b.arrivals_total)
    assert np.array_equal(a.matches_total, b.matches_total)


@pytest.mark.skipif(not HAS_COMPILED, reason="compiled kernel unavailable")
def test_backends_bit_identical_multi_link(multi_link, paper_schedule):
    topology, curves = multi_link
    out = []
    for backend in ("compiled", "python"):
        cfg = PolicyConfig(topology, curves, paper_schedule, 8_000, 2, backend=backend)
        out.append(run_policy("prob2p", cfg))
    assert np.array_equal(out[0].profit_per_slot, out[1].profit_per_slot)
    assert np.array_equal(out[0].qlen_per_slot, out[1].qlen_per_slot)


def test_phase_respects_slot_budget(single_link):
    topology, curves = single_link
    engine = SlotEngine(topology, curves, 0, horizon=50)
    prices = _phase_prices(curves, np.array([1.5]), np.array([0.5]), 0.1)
    res = engine.run_phase(prices, 0.5, 5, target_useful=10**6)
    assert res.slots_used == 50
    assert not res.reached_target
    assert res.exhausted
    res2 = engine.run_phase(prices, 0.5, 5, target_useful=1)
    assert res2.slots_used == 0 and res2.exhausted


def test_useful_sample_bookkeeping(single_link):
    """Each phase collects at least the target per queue; the estimate uses
    exactly the first `target` useful samples, all taken at the midpoint."""
    topology, curves = single_link
    engine = SlotEngine(topology, curves, 4, horizon=10_000, record_trace=True)
    target = 40
    res = engine.run_phase(_phase_prices(curves, np.array([1.5]), np.array([0.5]), 0.2), 0.5, 4, target_useful=target)
    assert res.reached_target
    table = engine.full_trace()
    useful = table.useful[: res.slots_used]
    assert useful.sum(axis=0).min() >= target
    # useful slots posted the midpoint price
    assert np.all(table.prices[useful[:, 0] == 1, 0] == 1.5)
    assert np.all(table.prices[useful[:, 1] == 1, 1] == 0.5)
    # estimate equals the mean over the first `target` useful arrivals
    for k in range(2):
        first = np.where(useful[:, k] == 1)[0][:target]
        assert res.estimates[k] == pytest.approx(table.arrivals[first, k].mean())


def test_trace_conserves_mass(multi_link):
    topology, curves = multi_link
    engine = SlotEngine(topology, curves, 6, horizon=2_000, record_trace=True, check_structure=True)
    mids_c = np.array([1.0, 1.0, 1.0])
    mids_s = np.array([1.0, 1.0, 1.0])
    engine.run_phase(_phase_prices(curves, mids_c, mids_s, 0.2), 0.5, 4, max_slots=2_000)
    assert engine.structural_violation is None
    ok, bad = conservation_check(engine.full_trace())
    assert ok, f"conservation failed at slot {bad}"


def test_prices_stay_in_bounds(single_link):
    topology, curves = single_link
    engine = SlotEngine(topology, curves, 8, horizon=3_000, record_trace=True)
    # midpoint near the ceiling: the perturbation must clamp at p_max
    engine.run_phase(_phase_prices(curves, np.array([1.95]), np.array([0.05]), 0.3), 0.5, 3, max_slots=3_000)
    table = engine.full_trace()
    assert table.prices[:, 0].max() <= 2.0 and table.prices[:, 0].min() >= 0.0
    assert table.prices[:, 1].max() <= 2.0 and table.prices[:, 1].min() >= 0.0


def test_extreme_price_caps_queue(single_link):
    topology, curves = single_link
    engine = SlotEngine(topology, curves, 3, horizon=50_000)
    q_th = 4
    engine.run_phase(_phase_prices(curves, np.array([0.0]), np.array([2.0]), 0.0), 0.5, q_th)
    assert engine.qmax <= q_th
