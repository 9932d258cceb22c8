from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketq import (
    ConfigurationError,
    CurveSet,
    LinearCurve,
    Topology,
    fluid_objective,
    induced_rates,
    inner_radius,
    project_to_shrunk,
    shrunk_contains,
    solve_fluid,
)
from marketq.errors import DomainError
from marketq.fluid import ShrunkRegion, max_feasible_a_min
from marketq.oracles import transportation_feasible
from tests.conftest import random_feasible

# dyadic rationals make every sum in these linear identities exact
dyadic = st.integers(min_value=0, max_value=2**10).map(lambda k: k / 2**12)


class TestTopology:
    def test_rejects_isolated_nodes(self):
        with pytest.raises(ConfigurationError):
            Topology(2, 1, ((0, 0),))

    def test_rejects_duplicates(self):
        with pytest.raises(ConfigurationError):
            Topology(1, 1, ((0, 0), (0, 0)))

    def test_adjacency_sorted(self, multi_link):
        topology, _ = multi_link
        for adj in topology.customer_adj:
            assert list(adj) == sorted(adj)


class TestInducedRates:
    def test_single_edge(self, single_link):
        topology, _ = single_link
        lam, mu = induced_rates(topology, np.array([0.25]))
        assert lam.tolist() == [0.25] and mu.tolist() == [0.25]

    def test_zero_vector(self, multi_link):
        topology, _ = multi_link
        lam, mu = induced_rates(topology, np.zeros(topology.n_edges))
        assert not lam.any() and not mu.any()

    def test_hand_sums_multi_link(self, multi_link):
        topology, _ = multi_link
        x = np.array([0.05, 0.05, 0.15, 0.2, 0.05, 0.15, 0.1])
        lam, mu = induced_rates(topology, x)
        # edges: (1,1),(1,2),(1,3),(2,1),(2,2),(3,2),(3,3)
        assert lam == pytest.approx([0.25, 0.25, 0.25])
        assert mu == pytest.approx([0.25, 0.25, 0.25])

    def test_dimension_mismatch(self, multi_link):
        topology, _ = multi_link
        with pytest.raises(DomainError):
            induced_rates(topology, np.zeros(3))

    @settings(max_examples=50)
    @given(st.lists(dyadic, min_size=7, max_size=7), st.lists(dyadic, min_size=7, max_size=7))
    def test_linearity_exact(self, xs, ys):
        topology = Topology(3, 3, ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 1), (2, 2)))
        x, y = np.array(xs), np.array(ys)
        lx, mx = induced_rates(topology, x)
        ly, my = induced_rates(topology, y)
        ls, ms = induced_rates(topology, 0.5 * x + 0.25 * y)
        assert np.array_equal(ls, 0.5 * lx + 0.25 * ly)
        assert np.array_equal(ms, 0.5 * mx + 0.25 * my)

    @settings(max_examples=50)
    @given(st.lists(dyadic, min_size=7, max_size=7))
    def test_totals_balance(self, xs):
        topology = Topology(3, 3, ((0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 1), (2, 2)))
        lam, mu = induced_rates(topology, np.array(xs))
        assert lam.sum() == mu.sum()


class TestFluidObjective:
    def test_single_link_quarter(self, single_link):
        assert fluid_objective(*single_link, np.array([0.25])) == pytest.approx(0.25)

    def test_zero(self, single_link):
        assert fluid_objective(*single_link, np.array([0.0])) == 0.0

    def test_symmetric_multi_link(self, multi_link):
        x = np.array([0.05, 0.05, 0.15, 0.2, 0.05, 0.15, 0.1])
        assert fluid_objective(*multi_link, x) == pytest.approx(0.75)

    def test_domain_error(self, single_link):
        with pytest.raises(DomainError):
            fluid_objective(*single_link, np.array([1.5]))


class TestInnerRadius:
    def test_single_link_value(self, single_link):
        topology, _ = single_link
        assert inner_radius(topology, 0.01) == pytest.approx(0.495)

    def test_limit_small_a_min(self, single_link):
        topology, _ = single_link
        assert inner_radius(topology, 1e-12) == pytest.approx(0.5, abs=1e-9)

    def test_first_term_upper_bound(self, multi_link):
        topology, _ = multi_link
        a_min = 0.01
        n_max = max(topology.edge_degree_bound(e) for e in range(topology.n_edges))
        assert inner_radius(topology, a_min) <= (1 + a_min) / (2 * n_max)

    def test_invalid_a_min_suggests_shrink(self):
        # one customer fanned out to 8 servers: sum of 1/(2N) = 0.5 < 1
        topology = Topology(1, 8, tuple((0, j) for j in range(8)))
        sup = max_feasible_a_min(topology)
        assert sup < 1.0
        with pytest.raises(ConfigurationError, match="shrink"):
            inner_radius(topology, sup + 0.01)
        assert inner_radius(topology, sup * 0.99) > 0


class TestShrunkRegion:
    def test_center_contained(self, single_link):
        topology, _ = single_link
        region = ShrunkRegion(topology, 0.01, 0.1)
        assert shrunk_contains(region, topology, region.center)

    def test_edge_bound_excludes_small_x(self, single_link):
        topology, _ = single_link
        region = ShrunkRegion(topology, 0.01, 0.1)
        assert region.edge_lower[0] == pytest.approx(0.505 * 0.1 / 0.495)
        assert not shrunk_contains(region, topology, np.array([0.01]))

    def test_negative_entry_excluded(self, two_edge):
        topology, _ = two_edge
        region = ShrunkRegion(topology, 0.01, 0.05)
        assert not shrunk_contains(region, topology, np.array([-0.01, 0.5]))

    def test_delta_must_be_below_r(self, single_link):
        topology, _ = single_link
        with pytest.raises(ConfigurationError):
            ShrunkRegion(topology, 0.01, 0.5)

    def test_auto_shrink(self):
        topology = Topology(1, 8, tuple((0, j) for j in range(8)))
        region = ShrunkRegion.build(topology, 0.9, 1e-3)
        assert region.a_min < 0.9


class TestProjection:
    def test_identity_inside(self, single_link):
        topology, _ = single_link
        region = ShrunkRegion(topology, 0.01, 0.1)
        x = np.array([0.3])
        assert np.array_equal(project_to_shrunk(region, topology, x), x)

    def test_one_dim_clamp(self, single_link):
        topology, _ = single_link
        region = ShrunkRegion(topology, 0.01, 0.1)
        out = project_to_shrunk(region, topology, np.array([0.95]))
        assert out[0] == pytest.approx(region.cust_hi[0])
        out = project_to_shrunk(region, topology, np.array([-0.4]))
        assert out[0] == pytest.approx(max(region.edge_lower[0], region.cust_lo[0]))

    def test_idempotent(self, two_edge):
        topology, _ = two_edge
        region = ShrunkRegion(topology, 0.01, 0.05)
        rng = np.random.default_rng(0)
        for _ in range(20):
            once = project_to_shrunk(region, topology, rng.uniform(-0.5, 1.5, 2))
            assert shrunk_contains(region, topology, once)
            assert np.allclose(project_to_shrunk(region, topology, once), once, atol=1e-12)

    def test_variational_inequality(self, two_edge):
        topology, _ = two_edge
        region = ShrunkRegion(topology, 0.01, 0.05)
        rng = np.random.default_rng(1)
        witnesses = random_feasible(region, topology, rng, 100)
        for _ in range(10):
            x_in = rng.uniform(-0.5, 1.5, 2)
            x_out = project_to_shrunk(region, topology, x_in)
            gaps = (witnesses - x_out) @ (x_in - x_out)
            assert gaps.max() <= 1e-7

    def test_rejects_nonfinite(self, single_link):
        topology, _ = single_link
        region = ShrunkRegion(topology, 0.01, 0.1)
        with pytest.raises(DomainError):
            project_to_shrunk(region, topology, np.array([np.nan]))

    def test_safety_of_region(self, multi_link):
        topology, _ = multi_link
        region = ShrunkRegion.build(topology, 0.01, 0.12)
        rng = np.random.default_rng(2)
        for _ in range(1000):
            x = project_to_shrunk(region, topology, rng.uniform(0, 0.6, topology.n_edges))
            u = rng.normal(size=topology.n_edges)
            u /= np.linalg.norm(u)
            probe = x + region.delta * u
            lam, mu = induced_rates(topology, probe)
            assert np.all(probe >= -1e-9)
            assert np.all(lam >= region.a_min - 1e-9) and np.all(lam <= 1 + 1e-9)
            assert np.all(mu >= region.a_min - 1e-9) and np.all(mu <= 1 + 1e-9)


class TestSolveFluid:
    def test_single_link(self, single_link):
        sol = solve_fluid(*single_link, 0.01)
        assert sol.x_star[0] == pytest.approx(0.25, abs=1e-9)
        assert sol.f_star == pytest.approx(0.25, abs=1e-9)
        assert sol.kkt_residual <= 1e-8
        assert sol.interior
        prices = (
            single_link[1].demand[0].price_of_rate(sol.lambda_star[0]),
            single_link[1].supply[0].price_of_rate(sol.mu_star[0]),
        )
        assert prices == (pytest.approx(1.5), pytest.approx(0.5))

    def test_multi_link(self, multi_link):
        sol = solve_fluid(*multi_link, 0.01)
        assert sol.f_star == pytest.approx(0.75, abs=1e-6)
        assert sol.lambda_star == pytest.approx([0.25] * 3, abs=1e-6)
        assert sol.mu_star == pytest.approx([0.25] * 3, abs=1e-6)
        assert sol.kkt_residual <= 1e-8
        assert transportation_feasible(multi_link[0], sol.lambda_star, sol.mu_star)

    def test_degenerate_boundary(self, single_link):
        topology, _ = single_link
        curves = CurveSet(
            demand=(LinearCurve("demand", 2.0, 2.0),),
            supply=(LinearCurve("supply", 2.0, 2.0),),
        )
        sol = solve_fluid(topology, curves, 0.01)
        assert sol.x_star[0] == pytest.approx(0.0, abs=1e-9)
        assert not sol.interior
        assert not sol.interior_report["x_positive"]

    def test_beats_random_feasible(self, multi_link):
        topology, curves = multi_link
        sol = solve_fluid(topology, curves, 0.01)
        rng = np.random.default_rng(3)
        for _ in range(1000):
            x = rng.uniform(0, 1, topology.n_edges)
            lam, mu = induced_rates(topology, x)
            big = max(lam.max(), mu.max())
            if big > 1:
                x = x / big
            assert fluid_objective(topology, curves, x) <= sol.f_star + 1e-9

    def test_dual_stationarity(self, multi_link):
        topology, curves = multi_link
        sol = solve_fluid(topology, curves, 0.01)
        # stationarity rows: d profit/d lambda + kappa_c - gamma_c = 0 etc.
        for i in range(3):
            mr = curves.demand[i].marginal_value(sol.lambda_star[i])
            assert abs(mr + sol.kappa_c[i] - sol.gamma_c[i]) <= 1e-8
        for j in range(3):
            mc = curves.supply[j].marginal_value(sol.mu_star[j])
            assert abs(-mc + sol.kappa_s[j] - sol.gamma_s[j]) <= 1e-8
        for e, (i, j) in enumerate(topology.edges):
            assert abs(-(sol.kappa_c[i] + sol.kappa_s[j]) + sol.xi[e]) <= 1e-8
            assert sol.xi[e] >= -1e-9
            assert abs(sol.xi[e] * sol.x_star[e]) <= 1e-8

    def test_asymmetric_instance_against_oracle(self):
        topology = Topology(2, 1, ((0, 0), (1, 0)))
        curves = CurveSet(
            demand=(LinearCurve("demand", 2.0, 2.0), LinearCurve("demand", 3.0, 3.0)),
            supply=(LinearCurve("supply", 0.0, 1.0),),
        )
        sol = solve_fluid(topology, curves, 0.01)
        assert sol.kkt_residual <= 1e-8
        rng = np.random.default_rng(4)
        for _ in range(1000):
            x = rng.uniform(0, 0.5, 2)
            lam, mu = induced_rates(topology, x)
            if lam.max() > 1 or mu.max() > 1:
                continue
            assert fluid_objective(topology, curves, x) <= sol.f_star + 1e-9
