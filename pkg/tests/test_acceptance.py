"""Acceptance suite: one check per release criterion, at stated tolerances.

Each criterion appears as its own test (parameterized where per-case
verdicts are informative).  Known-unattainable cases are left to fail
honestly rather than being weakened; the data-provenance gates below tie
cost assertions to the status recorded in data/cvrplib/PROVENANCE.txt.
"""

import os
import random
import time

import pytest

from mllm_cvrp.bench import (
    SOLVED_SET,
    ROSTER,
    PUBLISHED_RESULTS,
    check_against_roster,
    load_manifest,
    load_provenance,
    random_solution,
    savings_solve,
)
from mllm_cvrp.core import Solution, check_feasibility, gap, solution_cost
from mllm_cvrp.llm import ChatSession, SessionConfig, persist_transcript
from mllm_cvrp.orchestrate import SolveConfig, refine_loop, solve
from mllm_cvrp.promptxml import (
    MODE_TEXT,
    build_error_prompt,
    extract_solution,
    solution_to_xml,
)
from mllm_cvrp.render import render_layout, render_routes
from mllm_cvrp.tsplib import parse_instance, parse_solution
from mllm_cvrp.validate import repair_capacity, validate_ids

from conftest import DATA_DIR
from helpers import ScriptedTransport, make_instance, mutate, random_partition
from test_validate_repair import multiset_oracle

MANIFEST = load_manifest(DATA_DIR / "manifest.txt")
PROVENANCE = load_provenance(DATA_DIR / "PROVENANCE.txt")


def load(name):
    return parse_instance(MANIFEST[name].read_text())


# --- Criterion 1: gap-metric reproduction, all 34 published cells -----------

GAP_CELLS = [(name, mode) for name in PUBLISHED_RESULTS for mode in ("MLLM-T", "MLLM-V")]


@pytest.mark.parametrize("name,mode", GAP_CELLS,
                         ids=[f"{n}-{m}" for n, m in GAP_CELLS])
def test_c01_gap_reproduction(name, mode):
    optimal, _, t_avg, t_gap, _, v_avg, v_gap = PUBLISHED_RESULTS[name]
    average, printed = (t_avg, t_gap) if mode == "MLLM-T" else (v_avg, v_gap)
    recomputed = round(gap(average, optimal) * 100)
    assert abs(recomputed - printed) <= 1, (
        f"{name} {mode}: recomputed gap {recomputed}% vs printed {printed}% "
        f"(average {average}, optimal {optimal})")


# --- Criterion 2: parser coverage of the full roster ------------------------

def test_c02_parser_coverage_20_instances():
    start = time.perf_counter()
    assert len(MANIFEST) == 20 and set(MANIFEST) == set(ROSTER)
    all_conflicts = []
    for name, path in MANIFEST.items():
        text = path.read_text()
        instance = parse_instance(text)
        dimension = int(next(line.split(":")[1] for line in text.splitlines()
                             if line.upper().startswith("DIMENSION")))
        assert instance.n_customers == dimension - 1
        conflicts = check_against_roster(instance)
        all_conflicts.extend(conflicts)
        _, fleet, capacity = ROSTER[name]
        if instance.capacity != capacity:
            assert any("capacity" in c for c in conflicts)
        if instance.fleet_size != fleet:
            assert any("fleet" in c for c in conflicts)
    # the one known printed-vs-file disagreement, reported with file winning
    assert len(all_conflicts) == 1 and "X-n153-k22" in all_conflicts[0]
    assert time.perf_counter() - start < 1.0


# --- Criterion 3: cost-engine oracle on published solution files ------------

COST_ORACLE_SET = ("A-n32-k5", "E-n51-k5") + SOLVED_SET


@pytest.mark.parametrize("name", COST_ORACLE_SET)
def test_c03_cost_oracle(name):
    start = time.perf_counter()
    status = PROVENANCE.get(name)
    assert status == "verified", (
        f"{name}: bundled data is '{status}', not verified against the "
        f"published optimum, so no published-solution cost parity is possible "
        f"offline (see data/README.md)")
    instance = load(name)
    solution, declared = parse_solution((DATA_DIR / f"{name}.sol").read_text())
    assert declared is not None
    assert solution_cost(instance, solution) == declared
    assert time.perf_counter() - start < 1.0


def test_c03_at_least_three_verified_pairs():
    verified = [n for n in COST_ORACLE_SET if PROVENANCE.get(n) == "verified"]
    assert len(verified) >= 3, (
        f"only {len(verified)} verified instance/solution pairs available "
        f"offline: {verified}")


# --- Criterion 4: validator vs brute-force multiset oracle ------------------

def test_c04_validator_oracle_equivalence_1000_mutations():
    start = time.perf_counter()
    rng = random.Random(42)
    names = ("A-n32-k5", "E-n51-k5", "P-n19-k2", "P-n55-k10", "P-n60-k10")
    for name in names:
        instance = load(name)
        for _ in range(200):
            candidate = mutate(random_partition(instance, rng),
                               instance.n_customers, rng)
            got = validate_ids(instance, candidate)
            expected = multiset_oracle(instance.n_customers, candidate.all_ids())
            assert (got.duplicated, got.missing, got.extraneous) == expected
    assert time.perf_counter() - start < 5.0


# --- Criterion 5: repair soundness and idempotence ---------------------------

def test_c05_repair_soundness_1000_candidates():
    start = time.perf_counter()
    rng = random.Random(7)
    instances = [load(name) for name in sorted(MANIFEST)]
    for i in range(1000):
        instance = instances[i % len(instances)]
        candidate = random_partition(instance, rng)
        repaired = repair_capacity(instance, candidate)
        report = check_feasibility(instance, repaired)
        assert report.feasible, (instance.name, candidate, repaired)
        assert repair_capacity(instance, repaired) == repaired
    assert time.perf_counter() - start < 10.0


# --- Criterion 6: the documented correction dialogue, replayed ---------------

INVALID_XML = ("<SOLUTION>\n<route id=1>[1,3,7,9,9]</route>\n"
               "<route id=2>[2,4,6,8,10,11]</route>\n</SOLUTION>")
CORRECTED_XML = ("<SOLUTION>\n<route id=1>[1,3,7,9,5]</route>\n"
                 "<route id=2>[2,4,6,8,10]</route>\n</SOLUTION>")


def dialogue_instance():
    return make_instance([(i, i % 3) for i in range(1, 11)], [1] * 10,
                         capacity=100, fleet_size=2, name="dialogue-n11-k2")


def run_dialogue():
    instance = dialogue_instance()
    session = ChatSession(SessionConfig(transport="replay"),
                          ScriptedTransport([CORRECTED_XML]))
    outcome = refine_loop(session, instance, extract_solution(INVALID_XML),
                          SolveConfig(mode=MODE_TEXT, solved_examples=(),
                                      session=SessionConfig(transport="replay")))
    return session, outcome


def test_c06_dialogue_replay_exactly_one_iteration():
    instance = dialogue_instance()
    report = validate_ids(instance, extract_solution(INVALID_XML).to_solution())
    prompt = build_error_prompt(extract_solution(INVALID_XML), report)
    assert "duplicated customer IDs are given by: [9]" in prompt
    assert "missed customer IDs are given by: [5]" in prompt
    assert "should not appear are given by: [11]" in prompt

    first_session, first = run_dialogue()
    second_session, second = run_dialogue()
    for outcome in (first, second):
        assert outcome.iterations == 1
        assert not outcome.fallback_used
        assert validate_ids(instance, outcome.solution).is_empty
    assert first.solution == second.solution
    assert [r.request_hash for r in first_session.transcript.records] == \
        [r.request_hash for r in second_session.transcript.records]


# --- Criterion 7: prompt-schema round-trip over 500 pairs --------------------

def test_c07_prompt_round_trip_500_pairs():
    start = time.perf_counter()
    rng = random.Random(99)
    for i in range(500):
        n = 1 + (i % 40)
        instance = make_instance(
            [(rng.randint(0, 1000), rng.randint(0, 1000)) for _ in range(n)],
            [rng.randint(0, 50) for _ in range(n)],
            capacity=60, fleet_size=max(1, n), name=f"rt{i}-k1")
        solution = random_partition(instance, rng)
        recovered = extract_solution(solution_to_xml(solution)).to_solution()
        assert recovered == solution
    assert time.perf_counter() - start < 5.0


# --- Criterion 8: renderer counts + byte-identical re-renders ----------------

@pytest.mark.parametrize("name", sorted(ROSTER))
def test_c08_renderer_counts(name):
    instance = load(name)
    layout = render_layout(instance)
    assert layout.marker_count() == instance.n_customers + 1
    solution = savings_solve(instance)
    routed = render_routes(instance, solution)
    assert routed.marker_count() == instance.n_customers + 1
    assert routed.polyline_count() == len(solution.routes)
    again = render_routes(instance, solution)
    assert again.png == routed.png and again.svg == routed.svg


# --- Criterion 9: baseline ordering sanity ------------------------------------

def test_c09_savings_beats_random_on_p19():
    instance = load("P-n19-k2")
    savings = savings_solve(instance)
    assert check_feasibility(instance, savings).feasible
    savings_cost = solution_cost(instance, savings)
    costs = []
    for seed in range(100):
        sol = random_solution(instance, seed)
        assert check_feasibility(instance, sol).feasible
        costs.append(solution_cost(instance, sol))
    assert savings_cost < sum(costs) / len(costs)


# --- Criterion 10: replay determinism + gated live smoke test ----------------

def test_c10_full_pipeline_replay_determinism(tmp_path):
    instance = dialogue_instance()
    example = make_instance([(1, 0), (2, 1)], [1, 1], fleet_size=1,
                            name="ex-n3-k1")
    examples = ((example, Solution(routes=((1, 2),))),)
    session = ChatSession(SessionConfig(transport="replay"),
                          ScriptedTransport(["observations", INVALID_XML,
                                             CORRECTED_XML]))
    config = SolveConfig(mode=MODE_TEXT, solved_examples=examples,
                         session=SessionConfig(transport="replay"))
    recorded = solve(instance, config, session=session)
    path = tmp_path / "fixture.jsonl"
    persist_transcript(session.transcript, path)

    replay_config = SolveConfig(mode=MODE_TEXT, solved_examples=examples,
                                session=SessionConfig(transport="replay"),
                                transcript_path=str(path))
    runs = [solve(instance, replay_config) for _ in range(3)]
    for result in runs:
        assert result.solution == recorded.solution
        assert result.final_cost == recorded.final_cost
        assert result.refine_iterations == recorded.refine_iterations == 1
    assert runs[0].transcript.records == runs[1].transcript.records \
        == runs[2].transcript.records


@pytest.mark.skipif(not os.environ.get("MLLM_CVRP_LIVE_SMOKE"),
                    reason="live smoke test runs only with "
                           "MLLM_CVRP_LIVE_SMOKE=1 and a real API key")
def test_c10_live_smoke_single_run():
    instance = load("P-n19-k2")
    a32 = load("A-n32-k5")
    a32_sol, _ = parse_solution((DATA_DIR / "A-n32-k5.sol").read_text())
    config = SolveConfig(mode=MODE_TEXT, solved_examples=((a32, a32_sol),),
                         session=SessionConfig(transport="live"))
    result = solve(instance, config)
    assert result.feasibility.feasible
