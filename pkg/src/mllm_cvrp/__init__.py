"""CVRP optimization with multimodal LLM prompting.

Subpackages cover the full pipeline: TSPLIB ingestion, XML prompt
construction, optional figure rendering, chat transports with
record/replay, the three-step solve workflow, validation/repair, and a
benchmark harness with classical baselines.
"""

from mllm_cvrp.core import (
    Customer,
    FeasibilityReport,
    Instance,
    RoundingMode,
    Solution,
    check_feasibility,
    distance,
    gap,
    route_demand,
    solution_cost,
)

__all__ = [
    "Customer",
    "FeasibilityReport",
    "Instance",
    "RoundingMode",
    "Solution",
    "check_feasibility",
    "distance",
    "gap",
    "route_demand",
    "solution_cost",
]

__version__ = "0.1.0"
