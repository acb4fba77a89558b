"""Canonical CVRP data model, distance/cost engine, feasibility, gap metric.

Conventions, fixed package-wide:

* The depot is not a customer and never appears in routes; customers are
  numbered 1..n in instance-file order.
* Distances default to the TSPLIB EUC_2D convention (Euclidean rounded to
  the nearest integer) so that costs of published benchmark solutions are
  reproduced exactly.  ``RoundingMode.EXACT`` keeps raw floats for
  synthetic tests.
* ``fleet_size`` is advisory: solutions may use more routes (repair may
  open extra ones); reports flag overruns instead of rejecting them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property


class UnknownCustomerId(ValueError):
    """A route references an ID outside the instance's {1..n}."""


class NonPositiveOptimal(ValueError):
    """gap() needs a positive reference cost."""


class Unservable(ValueError):
    """Some single customer demand exceeds the vehicle capacity."""


class RoundingMode(enum.Enum):
    """Distance convention: TSPLIB EUC_2D nearest-integer vs raw Euclidean."""

    ROUNDED = "rounded"
    EXACT = "exact"


@dataclass(frozen=True)
class Customer:
    id: int
    x: float
    y: float
    demand: int

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"customer id must be >= 1, got {self.id}")
        if self.demand < 0:
            raise ValueError(f"negative demand for customer {self.id}")


@dataclass(frozen=True)
class Instance:
    """A CVRP instance: depot, customers 1..n, capacity Q, advisory fleet K."""

    name: str
    depot: tuple[float, float]
    customers: tuple[Customer, ...]
    capacity: int
    fleet_size: int
    rounding: RoundingMode = RoundingMode.ROUNDED

    def __post_init__(self):
        object.__setattr__(self, "customers", tuple(self.customers))
        object.__setattr__(self, "depot", (self.depot[0], self.depot[1]))
        if self.capacity < 1:
            raise ValueError(f"capacity must be positive, got {self.capacity}")
        if self.fleet_size < 1:
            raise ValueError(f"fleet_size must be positive, got {self.fleet_size}")
        ids = sorted(c.id for c in self.customers)
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError("customer ids must form a contiguous set 1..n")

    @cached_property
    def _by_id(self) -> dict[int, Customer]:
        return {c.id: c for c in self.customers}

    @property
    def n_customers(self) -> int:
        return len(self.customers)

    @property
    def total_demand(self) -> int:
        return sum(c.demand for c in self.customers)

    @property
    def demand_exceeds_fleet(self) -> bool:
        """True when no K-vehicle solution can exist (flagged, not rejected)."""
        return self.total_demand > self.fleet_size * self.capacity

    def customer(self, cid: int) -> Customer:
        try:
            return self._by_id[cid]
        except KeyError:
            raise UnknownCustomerId(
                f"{self.name}: customer id {cid} outside 1..{self.n_customers}"
            ) from None

    def oversized_demands(self) -> list[int]:
        """IDs whose single demand exceeds capacity (unservable customers)."""
        return [c.id for c in self.customers if c.demand > self.capacity]


@dataclass(frozen=True)
class Solution:
    """Routes of customer IDs; depot implicit at both ends of every route.

    Candidates straight from an LLM may be invalid (duplicate/missing/alien
    IDs), so construction enforces nothing; run ``validate_ids`` and
    ``check_feasibility`` to establish validity.
    """

    routes: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "routes", tuple(tuple(int(i) for i in r) for r in self.routes)
        )

    def all_ids(self) -> list[int]:
        """Every ID in route order, duplicates preserved."""
        return [cid for route in self.routes for cid in route]


@dataclass(frozen=True)
class FeasibilityReport:
    id_valid: bool
    per_route_demand: tuple[int, ...]
    capacity_violations: tuple[tuple[int, int], ...]  # (route index, excess)
    served_exactly_once: bool

    @property
    def feasible(self) -> bool:
        return self.id_valid and self.served_exactly_once and not self.capacity_violations


def _nint(x: float) -> int:
    # TSPLIB nearest-integer: floor(x + 0.5), not Python banker's rounding.
    return math.floor(x + 0.5)


def distance(a, b, rounding: RoundingMode = RoundingMode.ROUNDED):
    """Euclidean distance between coordinate pairs under the given rounding."""
    d = math.hypot(a[0] - b[0], a[1] - b[1])
    if rounding is RoundingMode.ROUNDED:
        return _nint(d)
    return d


def solution_cost(instance: Instance, solution: Solution):
    """Sum of depot->c1->...->cm->depot leg lengths over all routes.

    Rounded mode accumulates exact integers (no floating drift).  Empty
    routes contribute 0.  Raises UnknownCustomerId on alien IDs; call
    validate_ids first for candidates of unknown provenance.
    """
    total = 0 if instance.rounding is RoundingMode.ROUNDED else 0.0
    for route in solution.routes:
        if not route:
            continue
        prev = instance.depot
        for cid in route:
            c = instance.customer(cid)
            total += distance(prev, (c.x, c.y), instance.rounding)
            prev = (c.x, c.y)
        total += distance(prev, instance.depot, instance.rounding)
    return total


def route_demand(instance: Instance, route) -> int:
    """Total demand of one route's customers."""
    return sum(instance.customer(cid).demand for cid in route)


def check_feasibility(instance: Instance, solution: Solution) -> FeasibilityReport:
    """Full feasibility report; never raises, works on invalid candidates.

    Unknown IDs contribute zero demand (their true demand is undefined) and
    clear ``id_valid``.  ``served_exactly_once`` is true iff the multiset of
    all route IDs equals {1..n} exactly.
    """
    known = instance._by_id
    id_valid = all(cid in known for cid in solution.all_ids())
    demands = tuple(
        sum(known[cid].demand for cid in route if cid in known)
        for route in solution.routes
    )
    violations = tuple(
        (i, d - instance.capacity)
        for i, d in enumerate(demands)
        if d > instance.capacity
    )
    ids = solution.all_ids()
    exactly_once = sorted(ids) == list(range(1, instance.n_customers + 1))
    return FeasibilityReport(
        id_valid=id_valid,
        per_route_demand=demands,
        capacity_violations=violations,
        served_exactly_once=exactly_once,
    )


def gap(average_cost, optimal_cost) -> float:
    """Relative excess over the reference cost: (A - B) / B."""
    if optimal_cost <= 0:
        raise NonPositiveOptimal(f"reference cost must be > 0, got {optimal_cost}")
    return (average_cost - optimal_cost) / optimal_cost


def format_gap(ratio: float) -> str:
    """Whole-percent rendering used in reports, e.g. 0.2206 -> '22%'."""
    pct = ratio * 100.0
    whole = math.floor(pct + 0.5) if pct >= 0 else -math.floor(-pct + 0.5)
    return f"{whole}%"
