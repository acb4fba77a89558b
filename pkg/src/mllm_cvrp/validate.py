"""Customer-ID validation and the capacity Repair operator.

validate_ids mirrors the workflow's validation function: it names the
duplicated, missing, and out-of-range IDs that the correction prompt echoes
back to the model.  repair_capacity makes a valid-ID candidate feasible
while disturbing the model's route structure as little as possible.
apply_fix_instruction is the deterministic fallback applied when the model
keeps failing past the iteration cap; it executes exactly the instruction
the error prompt states in words.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from mllm_cvrp.core import Instance, Solution, Unservable, distance, route_demand


class InvalidIds(ValueError):
    """repair_capacity requires an ID-valid candidate."""


@dataclass(frozen=True)
class ValidationReport:
    duplicated: tuple[int, ...]  # in-range IDs appearing >= 2 times, each once
    missing: tuple[int, ...]     # in {1..n} but absent
    extraneous: tuple[int, ...]  # present but outside {1..n}

    @property
    def is_empty(self) -> bool:
        return not (self.duplicated or self.missing or self.extraneous)


def validate_ids(instance: Instance, candidate: Solution) -> ValidationReport:
    """Compare the candidate's ID multiset against {1..n}.

    An out-of-range ID is reported only as extraneous, never as duplicated,
    regardless of its multiplicity.
    """
    n = instance.n_customers
    counts = Counter(candidate.all_ids())
    return ValidationReport(
        duplicated=tuple(sorted(
            i for i, c in counts.items() if c >= 2 and 1 <= i <= n)),
        missing=tuple(sorted(
            i for i in range(1, n + 1) if i not in counts)),
        extraneous=tuple(sorted(
            i for i in counts if not 1 <= i <= n)),
    )


def _cheapest_insertion(instance, route, cid):
    """(cost delta, position) for inserting cid into route; depot-padded."""
    c = instance.customer(cid)
    points = [instance.depot]
    points += [(instance.customer(r).x, instance.customer(r).y) for r in route]
    points.append(instance.depot)
    best = None
    for pos in range(len(route) + 1):
        a, b = points[pos], points[pos + 1]
        delta = (distance(a, (c.x, c.y), instance.rounding)
                 + distance((c.x, c.y), b, instance.rounding)
                 - distance(a, b, instance.rounding))
        if best is None or delta < best[0]:
            best = (delta, pos)
    return best


def repair_capacity(instance: Instance, candidate: Solution) -> Solution:
    """Make a valid-ID candidate capacity-feasible.

    Overloaded routes shed customers from the tail until they fit; each
    shed customer goes to the cheapest feasible insertion point across all
    routes (ties: lowest route index, then lowest position), or seeds a new
    route when nothing fits.  Feasible input is returned unchanged, which
    also makes the operator idempotent.
    """
    report = validate_ids(instance, candidate)
    if not report.is_empty:
        raise InvalidIds(f"repair requires valid IDs, got {report}")
    oversized = instance.oversized_demands()
    if oversized:
        raise Unservable(
            f"demand exceeds capacity {instance.capacity} for customers {oversized}")

    if all(route_demand(instance, r) <= instance.capacity for r in candidate.routes):
        return candidate

    routes = [list(r) for r in candidate.routes]
    shed: list[int] = []
    for route in routes:
        while route_demand(instance, route) > instance.capacity:
            shed.append(route.pop())

    for cid in shed:
        demand = instance.customer(cid).demand
        best = None  # (delta, route index, position)
        for ri, route in enumerate(routes):
            if route_demand(instance, route) + demand > instance.capacity:
                continue
            delta, pos = _cheapest_insertion(instance, route, cid)
            if best is None or delta < best[0]:
                best = (delta, ri, pos)
        if best is None:
            routes.append([cid])
        else:
            _, ri, pos = best
            routes[ri].insert(pos, cid)

    return Solution(routes=tuple(tuple(r) for r in routes))


def apply_fix_instruction(candidate: Solution, report: ValidationReport) -> Solution:
    """Deterministically perform the correction the error prompt asks for:
    drop repeats past the first occurrence, drop out-of-range IDs, then
    append each missing ID to the route with the fewest customers (ties:
    lowest route index)."""
    if report.is_empty:
        return candidate

    duplicated = set(report.duplicated)
    extraneous = set(report.extraneous)
    seen: set[int] = set()
    routes: list[list[int]] = []
    for route in candidate.routes:
        kept = []
        for cid in route:
            if cid in extraneous:
                continue
            if cid in duplicated:
                if cid in seen:
                    continue
                seen.add(cid)
            kept.append(cid)
        routes.append(kept)

    if not routes:
        routes.append([])
    for cid in report.missing:
        target = min(range(len(routes)), key=lambda i: (len(routes[i]), i))
        routes[target].append(cid)

    return Solution(routes=tuple(tuple(r) for r in routes))
