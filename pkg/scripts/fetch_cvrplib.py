#!/usr/bin/env python3
"""Fetch authoritative benchmark data from the CVRPLIB site.

Downloads the .vrp (and, where published, .sol) files for every roster
instance, overwrites the local copies, re-checks solution-cost parity,
and rewrites PROVENANCE.txt accordingly.  Run this anywhere with network
access to replace the offline reconstructions/stand-ins bundled with the
repository (see data/README.md).

Usage: python3 scripts/fetch_cvrplib.py [--base-url URL] [--dest DIR]
"""

import argparse
import sys
from pathlib import Path

import requests

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mllm_cvrp.bench import ROSTER
from mllm_cvrp.core import solution_cost
from mllm_cvrp.tsplib import parse_instance, parse_solution

DEFAULT_BASE = "http://vrp.atd-lab.inf.puc-rio.br/media/com_vrp"

# The site organizes downloads by instance family.
FAMILY_DIRS = {"A": "A", "B": "B", "E": "E", "F": "F", "M": "M", "P": "P",
               "X": "X", "CMT": "CMT"}


def family(name):
    return FAMILY_DIRS[name.split("-")[0]]


def fetch(url, timeout=30):
    response = requests.get(url, timeout=timeout)
    if response.status_code != 200:
        return None
    return response.text


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--base-url", default=DEFAULT_BASE,
                        help="media root of the CVRPLIB site")
    parser.add_argument("--dest", default=str(Path(__file__).resolve().parent.parent
                                              / "data" / "cvrplib"))
    args = parser.parse_args()
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)

    statuses = {}
    for name in ROSTER:
        fam = family(name)
        vrp_text = fetch(f"{args.base_url}/instances/{fam}/{name}.vrp")
        if vrp_text is None:
            print(f"{name}: .vrp download FAILED (check the URL pattern)")
            continue
        instance = parse_instance(vrp_text)
        (dest / f"{name}.vrp").write_text(vrp_text)

        sol_text = fetch(f"{args.base_url}/solutions/{fam}/{name}.sol")
        if sol_text is None:
            print(f"{name}: fetched .vrp; no .sol published at expected URL")
            statuses[name] = "reconstructed"
            continue
        solution, declared = parse_solution(sol_text)
        recomputed = solution_cost(instance, solution)
        if declared is not None and recomputed != declared:
            print(f"{name}: PARITY FAILURE recomputed {recomputed} vs "
                  f"declared {declared} — not overwriting .sol")
            statuses[name] = "reconstructed"
            continue
        (dest / f"{name}.sol").write_text(sol_text)
        statuses[name] = "verified"
        print(f"{name}: verified (cost {recomputed})")

    if statuses:
        lines = ["# Data status per instance; see data/README.md for definitions."]
        for name in ROSTER:
            if name in statuses:
                lines.append(f"{name} {statuses[name]}")
        (dest / "PROVENANCE.txt").write_text("\n".join(lines) + "\n")
        print(f"rewrote {dest / 'PROVENANCE.txt'}")


if __name__ == "__main__":
    main()
