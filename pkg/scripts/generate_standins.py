#!/usr/bin/env python3
"""Regenerate the stand-in benchmark instances.

Some benchmark instances could not be bundled with verified data (see
data/README.md).  For those, this script generates format-faithful
stand-ins: same name, customer count, capacity and fleet size as the real
instance, coordinates and demands drawn from a per-name deterministic
seed, total demand placed so that the minimum feasible truck count equals
the fleet size in the name.  Stand-ins keep the pipeline runnable
end-to-end; they do NOT reproduce published costs, and their provenance
is marked in data/cvrplib/PROVENANCE.txt.

Usage: python3 scripts/generate_standins.py [output_dir]
"""

import hashlib
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mllm_cvrp.core import Customer, Instance
from mllm_cvrp.tsplib import format_instance

# name -> (customers, fleet, capacity, coord range, demand range)
STAND_INS = {
    "A-n36-k5": (35, 5, 100, 100, (1, 30)),
    "A-n38-k5": (37, 5, 100, 100, (1, 30)),
    "A-n39-k5": (38, 5, 100, 100, (1, 30)),
    "A-n44-k6": (43, 6, 100, 100, (1, 30)),
    "A-n45-k6": (44, 6, 100, 100, (1, 30)),
    "A-n46-k7": (45, 7, 100, 100, (1, 30)),
    "A-n65-k9": (64, 9, 100, 100, (1, 30)),
    "A-n69-k9": (68, 9, 100, 100, (1, 30)),
    "X-n139-k10": (138, 10, 106, 1000, (1, 13)),
    "X-n143-k7": (142, 7, 1190, 1000, (10, 99)),
    "X-n153-k22": (152, 22, 144, 1000, (1, 40)),
    "X-n162-k11": (161, 11, 1174, 1000, (30, 120)),
}


def demand_target(fleet, capacity):
    """Middle of the window where ceil(total / capacity) == fleet."""
    low, high = capacity * (fleet - 1) + 1, capacity * fleet
    return (low + high) // 2


def build(name):
    n, fleet, capacity, grid, (dlo, dhi) = STAND_INS[name]
    rng = random.Random(int(hashlib.sha256(name.encode()).hexdigest()[:8], 16))
    points = set()
    while len(points) < n + 1:
        points.add((rng.randint(0, grid), rng.randint(0, grid)))
    points = sorted(points)
    rng.shuffle(points)
    depot, sites = points[0], points[1:]
    demands = [rng.randint(dlo, dhi) for _ in range(n)]
    target = demand_target(fleet, capacity)
    while sum(demands) != target:
        i = rng.randrange(n)
        if sum(demands) < target and demands[i] < capacity:
            demands[i] += 1
        elif sum(demands) > target and demands[i] > 1:
            demands[i] -= 1
    customers = tuple(
        Customer(id=i + 1, x=x, y=y, demand=d)
        for i, ((x, y), d) in enumerate(zip(sites, demands))
    )
    return Instance(name=name, depot=depot, customers=customers,
                    capacity=capacity, fleet_size=fleet)


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in STAND_INS:
        instance = build(name)
        path = out / f"{name}.vrp"
        path.write_text(format_instance(
            instance, comment=f"(stand-in data, No of trucks: {instance.fleet_size})"))
        print(f"wrote {path} ({instance.n_customers} customers, "
              f"total demand {instance.total_demand})")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         Path(__file__).resolve().parent.parent / "data" / "cvrplib")
