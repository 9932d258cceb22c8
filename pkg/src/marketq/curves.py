"""Demand and supply curves: monotone bijections between price and rate.

A demand curve maps a customer arrival rate in [0, 1] to a price and is
strictly decreasing; a supply curve is strictly increasing.  Curves carry
Lipschitz/smoothness metadata that the pricing schedules consume.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

DEMAND = "demand"
SUPPLY = "supply"

_EDGE_TOL = 1e-12


class Curve(ABC):
    """Price <-> rate bijection with declared regularity constants.

    Attributes
    ----------
    kind : "demand" or "supply"
    p_min, p_max : price bounds; the forward map is onto [p_min, p_max]
    lipschitz_fwd / lipschitz_inv : Lipschitz constants of rate->price and
        price->rate
    smoothness_fwd / smoothness_inv : derivative-Lipschitz constants
    min_inv_slope : lower bound on |d rate / d price|
    """

    kind: str
    p_min: float
    p_max: float
    lipschitz_fwd: float
    lipschitz_inv: float
    smoothness_fwd: float
    smoothness_inv: float
    min_inv_slope: float

    def price_of_rate(self, rate: float) -> float:
        if not 0.0 - _EDGE_TOL <= rate <= 1.0 + _EDGE_TOL:
            raise DomainError(f"rate {rate!r} outside [0, 1]")
        price = self._price(min(max(rate, 0.0), 1.0))
        # Clip sub-ulp overshoot only; anything larger is a curve bug.
        return min(max(price, self.p_min), self.p_max)

    def rate_of_price(self, price: float) -> float:
        if not self.p_min - _EDGE_TOL <= price <= self.p_max + _EDGE_TOL:
            raise DomainError(
                f"price {price!r} outside [{self.p_min}, {self.p_max}]"
                " (clamp explicitly before calling)"
            )
        rate = self._rate(min(max(price, self.p_min), self.p_max))
        return min(max(rate, 0.0), 1.0)

    def revenue_rate(self, rate: float) -> float:
        """Money per slot at this rate: rate x price(rate)."""
        return rate * self.price_of_rate(rate)

    def price_slope(self, rate: float) -> float:
        """d price / d rate; numeric fallback, exact in subclasses."""
        h = 1e-6
        lo, hi = max(0.0, rate - h), min(1.0, rate + h)
        return (self._price(hi) - self._price(lo)) / (hi - lo)

    def price_curvature(self, rate: float) -> float:
        """d^2 price / d rate^2; numeric fallback."""
        h = 1e-4
        r = min(max(rate, h), 1.0 - h)
        return (self._price(r + h) - 2.0 * self._price(r) + self._price(r - h)) / (h * h)

    def marginal_value(self, rate: float) -> float:
        """Derivative of revenue_rate: price + rate * price'."""
        return self._price(min(max(rate, 0.0), 1.0)) + rate * self.price_slope(rate)

    def marginal_value_slope(self, rate: float) -> float:
        """Second derivative of revenue_rate: 2 price' + rate * price''."""
        return 2.0 * self.price_slope(rate) + rate * self.price_curvature(rate)

    def price_range(self) -> float:
        return self.p_max - self.p_min

    @abstractmethod
    def _price(self, rate: float) -> float: ...

    @abstractmethod
    def _rate(self, price: float) -> float: ...


@dataclass(frozen=True)
class LinearCurve(Curve):
    """Affine curve: demand price = intercept - slope*rate, supply + slope*rate.

    ``slope`` is positive for both kinds; the direction of monotonicity
    comes from ``kind``.  Bounds default to the curve's endpoints so the
    forward map is a bijection onto [p_min, p_max].
    """

    kind: str
    intercept: float
    slope: float
    p_min: float = field(default=None)  # type: ignore[assignment]
    p_max: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in (DEMAND, SUPPLY):
            raise ConfigurationError(f"kind must be demand or supply, got {self.kind!r}")
        if not self.slope > 0:
            raise ConfigurationError("slope must be positive for both curve kinds")
        lo, hi = self._natural_bounds()
        if self.p_min is None:
            object.__setattr__(self, "p_min", lo)
        if self.p_max is None:
            object.__setattr__(self, "p_max", hi)
        if abs(self.p_min - lo) > 1e-9 or abs(self.p_max - hi) > 1e-9:
            raise ConfigurationError(
                f"declared bounds [{self.p_min}, {self.p_max}] must equal the"
                f" curve endpoints [{lo}, {hi}] so the map is bijective"
            )

    def _natural_bounds(self) -> tuple[float, float]:
        if self.kind == DEMAND:
            return self.intercept - self.slope, self.intercept
        return self.intercept, self.intercept + self.slope

    def _price(self, rate: float) -> float:
        if self.kind == DEMAND:
            return self.intercept - self.slope * rate
        return self.intercept + self.slope * rate

    def _rate(self, price: float) -> float:
        if self.kind == DEMAND:
            return (self.intercept - price) / self.slope
        return (price - self.intercept) / self.slope

    def price_slope(self, rate: float) -> float:
        return -self.slope if self.kind == DEMAND else self.slope

    def price_curvature(self, rate: float) -> float:
        return 0.0

    @property
    def lipschitz_fwd(self) -> float:
        return self.slope

    @property
    def lipschitz_inv(self) -> float:
        return 1.0 / self.slope

    @property
    def smoothness_fwd(self) -> float:
        return 0.0

    @property
    def smoothness_inv(self) -> float:
        return 0.0

    @property
    def min_inv_slope(self) -> float:
        return 1.0 / self.slope


def _pool_adjacent_violators(y: np.ndarray, increasing: bool) -> np.ndarray:
    """Least-squares monotone regression with equal weights."""
    sign = 1.0 if increasing else -1.0
    vals = list(sign * np.asarray(y, dtype=float))
    blocks: list[tuple[float, int]] = []  # (mean, count)
    for v in vals:
        blocks.append((v, 1))
        while len(blocks) >= 2 and blocks[-2][0] > blocks[-1][0]:
            m2, c2 = blocks.pop()
            m1, c1 = blocks.pop()
            blocks.append(((m1 * c1 + m2 * c2) / (c1 + c2), c1 + c2))
    out = []
    for m, c in blocks:
        out.extend([m] * c)
    return sign * np.array(out)


@dataclass(frozen=True)
class PiecewiseLinearCurve(Curve):
    """Curve interpolated through (price, rate) sample points.

    Used for curve estimates fitted from observed arrivals; sampled rates
    are rectified to the monotone fit before interpolation, so flats can
    occur and the inverse picks a boundary price there.
    """

    kind: str
    prices: tuple[float, ...]  # strictly ascending
    rates: tuple[float, ...]  # monotone per kind

    def __post_init__(self):
        if self.kind not in (DEMAND, SUPPLY):
            raise ConfigurationError(f"kind must be demand or supply, got {self.kind!r}")
        if len(self.prices) < 2:
            raise ConfigurationError("need at least two sample points")
        p = np.asarray(self.prices)
        if np.any(np.diff(p) <= 0):
            raise ConfigurationError("sample prices must be strictly ascending")
        object.__setattr__(self, "p_min", float(p[0]))
        object.__setattr__(self, "p_max", float(p[-1]))

    @classmethod
    def from_samples(cls, kind: str, prices, rates) -> "PiecewiseLinearCurve":
        order = np.argsort(prices)
        p = np.asarray(prices, dtype=float)[order]
        r = np.clip(np.asarray(rates, dtype=float)[order], 0.0, 1.0)
        r = np.clip(_pool_adjacent_violators(r, increasing=(kind == SUPPLY)), 0.0, 1.0)
        return cls(kind, tuple(p), tuple(r))

    def _arrays(self):
        return np.asarray(self.prices), np.asarray(self.rates)

    def _rate(self, price: float) -> float:
        p, r = self._arrays()
        return float(np.interp(price, p, r))

    def _price(self, rate: float) -> float:
        p, r = self._arrays()
        if self.kind == DEMAND:
            r_asc, p_for = r[::-1], p[::-1]
        else:
            r_asc, p_for = r, p
        uniq, first = np.unique(r_asc, return_index=True)
        return float(np.interp(rate, uniq, p_for[first]))

    def _segment_slopes(self):
        p, r = self._arrays()
        dp = np.diff(p)
        dr = np.diff(r)
        return dp, dr

    @property
    def lipschitz_fwd(self) -> float:
        dp, dr = self._segment_slopes()
        keep = abs(dr) > 1e-12
        return float(max(abs(dp[keep] / dr[keep]), default=0.0)) if keep.any() else 0.0

    @property
    def lipschitz_inv(self) -> float:
        dp, dr = self._segment_slopes()
        return float(max(abs(dr / dp)))

    @property
    def smoothness_fwd(self) -> float:
        return 0.0

    @property
    def smoothness_inv(self) -> float:
        return 0.0

    @property
    def min_inv_slope(self) -> float:
        dp, dr = self._segment_slopes()
        return float(min(abs(dr / dp)))


def audit_curve(curve: Curve, grid_step: float = 0.01) -> list[str]:
    """Check the declared invariants on a rate grid; returns failure messages."""
    failures: list[str] = []
    grid = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    prices = np.array([curve.price_of_rate(r) for r in grid])
    back = np.array([curve.rate_of_price(p) for p in prices])
    worst = float(np.max(np.abs(back - grid)))
    if worst > 1e-12:
        failures.append(f"round-trip error {worst:.3e} exceeds 1e-12")
    diffs = np.diff(prices)
    if curve.kind == DEMAND and not np.all(diffs < 0):
        failures.append("demand prices are not strictly decreasing")
    if curve.kind == SUPPLY and not np.all(diffs > 0):
        failures.append("supply prices are not strictly increasing")
    secants = np.abs(diffs) / grid_step
    if np.any(secants > curve.lipschitz_fwd + 1e-9):
        failures.append("forward secant slope exceeds the declared Lipschitz constant")
    inv_secants = grid_step / np.abs(diffs)
    if np.any(inv_secants > curve.lipschitz_inv + 1e-9):
        failures.append("inverse secant slope exceeds the declared Lipschitz constant")
    if np.any(inv_secants < curve.min_inv_slope - 1e-9):
        failures.append("inverse slope falls below the declared lower bound")
    rev = np.array([curve.revenue_rate(r) for r in grid])
    second = np.diff(rev, 2)
    if curve.kind == DEMAND and np.any(second > 1e-9):
        failures.append("revenue is not concave in the rate")
    if curve.kind == SUPPLY and np.any(second < -1e-9):
        failures.append("cost is not convex in the rate")
    return failures


def rejects_arrivals(curve: Curve) -> bool:
    """Whether the extreme price drives the arrival rate to zero."""
    extreme = curve.p_max if curve.kind == DEMAND else curve.p_min
    return curve.rate_of_price(extreme) <= 1e-12


@dataclass(frozen=True)
class CurveSet:
    """Demand curves for every customer type, supply curves for every server type."""

    demand: tuple[Curve, ...]
    supply: tuple[Curve, ...]

    def __post_init__(self):
        for c in self.demand:
            if c.kind != DEMAND:
                raise ConfigurationError("demand slot holds a non-demand curve")
        for c in self.supply:
            if c.kind != SUPPLY:
                raise ConfigurationError("supply slot holds a non-supply curve")

    @property
    def n_customers(self) -> int:
        return len(self.demand)

    @property
    def n_servers(self) -> int:
        return len(self.supply)
