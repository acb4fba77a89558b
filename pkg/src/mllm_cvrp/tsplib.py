"""TSPLIB/CVRPLIB file I/O: .vrp instances and .sol solution files.

Parsing is whitespace-tolerant (keyword separators vary across the A/P/E/X
benchmark families) but structurally strict: dimension mismatches, missing
sections, and non-EUC_2D edge weights are hard errors with line numbers
where available.

Solution files use the CVRPLIB convention: customers are numbered 1..n
with the depot excluded, which is exactly this package's ID scheme, so
.sol IDs pass through unchanged.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from mllm_cvrp.core import Customer, Instance, RoundingMode, Solution


class ParseError(ValueError):
    """Base for file-format errors; carries a 1-based line number if known."""

    def __init__(self, message, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedHeader(ParseError): ...


class DimensionMismatch(ParseError): ...


class MissingSection(ParseError): ...


class UnsupportedEdgeWeightType(ParseError): ...


class NonZeroDepotDemand(ParseError): ...


class MalformedRouteLine(ParseError): ...


class NoRoutes(ParseError): ...


_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION")


@dataclass
class RawInstanceFile:
    """Sectioned but uninterpreted .vrp contents."""

    header: dict[str, str] = field(default_factory=dict)
    coords: list[tuple[int, float, float]] = field(default_factory=list)
    demands: list[tuple[int, int]] = field(default_factory=list)
    depots: list[int] = field(default_factory=list)


def parse_raw(text: str) -> RawInstanceFile:
    raw = RawInstanceFile()
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        keyword = stripped.split(":")[0].strip().upper()
        if keyword == "EOF":
            break
        if keyword in _SECTIONS:
            section = keyword
            continue
        if section is None:
            if ":" not in stripped:
                raise MalformedHeader(f"expected 'KEY : value', got {stripped!r}", lineno)
            key, value = stripped.split(":", 1)
            raw.header[key.strip().upper()] = value.strip()
            continue
        parts = stripped.split()
        try:
            if section == "NODE_COORD_SECTION":
                raw.coords.append((int(parts[0]), float(parts[1]), float(parts[2])))
            elif section == "DEMAND_SECTION":
                raw.demands.append((int(parts[0]), int(parts[1])))
            elif section == "DEPOT_SECTION":
                idx = int(parts[0])
                if idx != -1:
                    raw.depots.append(idx)
        except (ValueError, IndexError):
            raise MalformedHeader(f"bad {section} row: {stripped!r}", lineno) from None
    return raw


def _fleet_size(name: str, comment: str) -> int | None:
    m = re.search(r"-k(\d+)\s*$", name)
    if m:
        return int(m.group(1))
    m = re.search(r"Min no of trucks:\s*(\d+)", comment, flags=re.IGNORECASE)
    if m:
        return int(m.group(1))
    m = re.search(r"No of trucks:\s*(\d+)", comment, flags=re.IGNORECASE)
    if m:
        return int(m.group(1))
    return None


def parse_instance(text: str, rounding: RoundingMode = RoundingMode.ROUNDED) -> Instance:
    """Build an Instance from .vrp text.

    The depot comes from DEPOT_SECTION; remaining nodes become customers
    re-indexed 1..n preserving file order.  Fleet size is read from the
    trailing "-kK" of NAME, falling back to the COMMENT's truck count.
    """
    raw = parse_raw(text)
    header = raw.header

    for key in ("NAME", "DIMENSION", "CAPACITY", "EDGE_WEIGHT_TYPE"):
        if key not in header:
            raise MalformedHeader(f"missing required header {key}")
    ewt = header["EDGE_WEIGHT_TYPE"].upper()
    if ewt != "EUC_2D":
        raise UnsupportedEdgeWeightType(f"EDGE_WEIGHT_TYPE {ewt} (only EUC_2D supported)")
    if header.get("TYPE", "CVRP").upper() != "CVRP":
        raise MalformedHeader(f"TYPE {header['TYPE']} is not CVRP")

    try:
        dimension = int(header["DIMENSION"])
        capacity = int(header["CAPACITY"])
    except ValueError as exc:
        raise MalformedHeader(f"non-integer DIMENSION/CAPACITY: {exc}") from None

    if not raw.coords:
        raise MissingSection("NODE_COORD_SECTION absent")
    if not raw.demands:
        raise MissingSection("DEMAND_SECTION absent")
    if not raw.depots:
        raise MissingSection("DEPOT_SECTION absent")
    if len(raw.coords) != dimension:
        raise DimensionMismatch(
            f"DIMENSION {dimension} but {len(raw.coords)} coordinate rows")
    if len(raw.demands) != dimension:
        raise DimensionMismatch(
            f"DIMENSION {dimension} but {len(raw.demands)} demand rows")
    if len(raw.depots) != 1:
        raise MalformedHeader(f"expected exactly one depot, got {raw.depots}")

    demand_by_node = dict(raw.demands)
    if len(demand_by_node) != len(raw.demands):
        raise DimensionMismatch("duplicate node index in DEMAND_SECTION")
    depot_node = raw.depots[0]
    if demand_by_node.get(depot_node, 0) != 0:
        raise NonZeroDepotDemand(
            f"depot node {depot_node} has demand {demand_by_node[depot_node]}")

    name = header["NAME"]
    fleet = _fleet_size(name, header.get("COMMENT", ""))
    if fleet is None:
        raise MalformedHeader(
            "cannot determine fleet size (no -kK suffix in NAME, no truck "
            "count in COMMENT)")

    depot_xy = None
    customers = []
    next_id = 1
    for node, x, y in raw.coords:
        if node == depot_node:
            depot_xy = (x, y)
            continue
        if node not in demand_by_node:
            raise DimensionMismatch(f"node {node} has coordinates but no demand")
        customers.append(Customer(id=next_id, x=x, y=y, demand=demand_by_node[node]))
        next_id += 1
    if depot_xy is None:
        raise MissingSection(f"depot node {depot_node} missing from NODE_COORD_SECTION")

    return Instance(
        name=name,
        depot=depot_xy,
        customers=tuple(customers),
        capacity=capacity,
        fleet_size=fleet,
        rounding=rounding,
    )


def _fmt_coord(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def format_instance(instance: Instance, comment: str | None = None) -> str:
    """Canonical .vrp serialization (depot as node 1, customers as 2..n+1).

    The default comment records the fleet size so that names without a
    "-kK" suffix still round-trip through parse_instance.
    """
    if comment is None:
        comment = f"(No of trucks: {instance.fleet_size})"
    lines = [f"NAME : {instance.name}", f"COMMENT : {comment}"]
    lines += [
        "TYPE : CVRP",
        f"DIMENSION : {instance.n_customers + 1}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
        f"CAPACITY : {instance.capacity}",
        "NODE_COORD_SECTION",
        f" 1 {_fmt_coord(instance.depot[0])} {_fmt_coord(instance.depot[1])}",
    ]
    for c in instance.customers:
        lines.append(f" {c.id + 1} {_fmt_coord(c.x)} {_fmt_coord(c.y)}")
    lines.append("DEMAND_SECTION")
    lines.append(" 1 0")
    for c in instance.customers:
        lines.append(f" {c.id + 1} {c.demand}")
    lines += ["DEPOT_SECTION", " 1", " -1", "EOF", ""]
    return "\n".join(lines)


_ROUTE_RE = re.compile(r"^Route\s*#(\d+)\s*:\s*(.*)$", re.IGNORECASE)
_COST_RE = re.compile(r"^Cost\s*:?\s*(-?[\d.]+)\s*$", re.IGNORECASE)


def parse_solution(text: str) -> tuple[Solution, float | None]:
    """Read a CVRPLIB .sol: "Route #i: id id ..." lines plus optional Cost."""
    routes: list[tuple[int, ...]] = []
    declared = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        m = _ROUTE_RE.match(stripped)
        if m:
            try:
                ids = tuple(int(tok) for tok in m.group(2).split())
            except ValueError:
                raise MalformedRouteLine(f"non-integer id in {stripped!r}", lineno) from None
            routes.append(ids)
            continue
        m = _COST_RE.match(stripped)
        if m:
            value = float(m.group(1))
            declared = int(value) if value.is_integer() else value
            continue
        raise MalformedRouteLine(f"unrecognized line {stripped!r}", lineno)
    if not routes:
        raise NoRoutes("no 'Route #i:' lines found")
    return Solution(routes=tuple(routes)), declared


def format_solution(solution: Solution, cost=None) -> str:
    lines = [
        f"Route #{i}: " + " ".join(str(cid) for cid in route)
        for i, route in enumerate(solution.routes, start=1)
    ]
    if cost is not None:
        lines.append(f"Cost {cost}")
    lines.append("")
    return "\n".join(lines)


def instance_fingerprint(instance: Instance) -> str:
    """Stable 16-hex-char content hash; cache key for transcripts and images.

    Customer order is semantic (IDs are positional), so reordering changes
    the fingerprint.
    """
    h = hashlib.sha256()
    h.update(instance.name.encode())
    h.update(f"|{instance.capacity}|{instance.fleet_size}|{instance.rounding.value}".encode())
    h.update(f"|{instance.depot[0]!r},{instance.depot[1]!r}".encode())
    for c in instance.customers:
        h.update(f"|{c.id}:{c.x!r},{c.y!r},{c.demand}".encode())
    return h.hexdigest()[:16]
