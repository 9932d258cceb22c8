from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from marketq import DomainError, LinearCurve
from marketq.curves import PiecewiseLinearCurve, audit_curve, rejects_arrivals
from marketq.errors import ConfigurationError

DEMAND = LinearCurve("demand", 2.0, 2.0)
SUPPLY = LinearCurve("supply", 0.0, 2.0)


class TestPriceOfRate:
    def test_demand_closed_form(self):
        assert DEMAND.price_of_rate(0.25) == pytest.approx(1.5)

    def test_demand_boundary(self):
        assert DEMAND.price_of_rate(0.0) == 2.0

    def test_supply_closed_form(self):
        assert SUPPLY.price_of_rate(0.25) == pytest.approx(0.5)

    def test_rate_out_of_domain(self):
        with pytest.raises(DomainError):
            DEMAND.price_of_rate(1.5)
        with pytest.raises(DomainError):
            DEMAND.price_of_rate(-0.2)


class TestRateOfPrice:
    def test_demand_inverse(self):
        assert DEMAND.rate_of_price(1.5) == pytest.approx(0.25)

    def test_max_price_kills_demand(self):
        assert DEMAND.rate_of_price(2.0) == 0.0

    def test_supply_boundary(self):
        assert SUPPLY.rate_of_price(2.0) == 1.0

    def test_price_out_of_domain(self):
        with pytest.raises(DomainError):
            DEMAND.rate_of_price(2.5)
        with pytest.raises(DomainError):
            SUPPLY.rate_of_price(-0.1)


class TestRevenueRate:
    def test_demand(self):
        assert DEMAND.revenue_rate(0.25) == pytest.approx(0.375)

    def test_zero_rate(self):
        assert DEMAND.revenue_rate(0.0) == 0.0
        assert SUPPLY.revenue_rate(0.0) == 0.0

    def test_supply(self):
        assert SUPPLY.revenue_rate(0.25) == pytest.approx(0.125)


@given(st.integers(min_value=0, max_value=100))
def test_round_trip_on_grid(k):
    rate = k / 100.0
    for curve in (DEMAND, SUPPLY):
        assert abs(curve.rate_of_price(curve.price_of_rate(rate)) - rate) <= 1e-12


def test_monotonicity_direction():
    grid = np.linspace(0, 1, 101)
    d_prices = [DEMAND.price_of_rate(r) for r in grid]
    s_prices = [SUPPLY.price_of_rate(r) for r in grid]
    assert all(a > b for a, b in zip(d_prices, d_prices[1:]))
    assert all(a < b for a, b in zip(s_prices, s_prices[1:]))


def test_audit_passes_for_reference_curves():
    assert audit_curve(DEMAND) == []
    assert audit_curve(SUPPLY) == []


def test_audit_catches_wrong_lipschitz():
    class Lying(LinearCurve):
        @property
        def lipschitz_fwd(self):
            return 0.5  # true slope is 2

    assert any("Lipschitz" in f for f in audit_curve(Lying("demand", 2.0, 2.0)))


def test_reference_curves_reject_at_extremes():
    assert rejects_arrivals(DEMAND)
    assert rejects_arrivals(SUPPLY)


def test_constructor_validation():
    with pytest.raises(ConfigurationError):
        LinearCurve("demand", 2.0, -1.0)
    with pytest.raises(ConfigurationError):
        LinearCurve("sideways", 2.0, 1.0)
    with pytest.raises(ConfigurationError):
        LinearCurve("demand", 2.0, 2.0, p_min=0.5, p_max=2.0)  # not the endpoint


def test_derived_constants():
    assert DEMAND.lipschitz_fwd == 2.0
    assert DEMAND.lipschitz_inv == 0.5
    assert DEMAND.min_inv_slope == 0.5
    assert DEMAND.smoothness_fwd == 0.0
    assert DEMAND.price_slope(0.3) == -2.0
    assert SUPPLY.price_slope(0.3) == 2.0


class TestPiecewiseLinear:
    def test_interpolates_linear_samples(self):
        prices = np.linspace(0, 2, 11)
        rates = 1.0 - prices / 2.0
        est = PiecewiseLinearCurve.from_samples("demand", prices, rates)
        assert est.rate_of_price(1.5) == pytest.approx(0.25)
        assert est.price_of_rate(0.25) == pytest.approx(1.5)

    def test_rectifies_noise_monotone(self):
        prices = np.linspace(0, 2, 9)
        noisy = np.clip(1.0 - prices / 2.0 + np.array([0, 0.2, -0.2, 0, 0.1, -0.1, 0, 0, 0]), 0, 1)
        est = PiecewiseLinearCurve.from_samples("demand", prices, noisy)
        rates = [est.rate_of_price(p) for p in np.linspace(0, 2, 50)]
        assert all(a >= b - 1e-12 for a, b in zip(rates, rates[1:]))

    def test_needs_two_points(self):
        with pytest.raises(ConfigurationError):
            PiecewiseLinearCurve.from_samples("demand", [1.0], [0.5])
