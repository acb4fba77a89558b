"""Command-line entry point.

Subcommands cover the whole pipeline: parse, render, solve, validate,
repair, bench, replay.  Everything is runnable offline — `solve` and
`bench` default to the replay transport, and the baseline methods need no
transport at all.  Settings resolve as CLI flag > environment variable >
config file (--config, JSON) > built-in default, and every machine-
readable output echoes the effective values with their sources.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from mllm_cvrp import __version__, bench as benchmod
from mllm_cvrp.core import Unservable, check_feasibility, solution_cost
from mllm_cvrp.llm import (
    API_KEY_VARS,
    CorruptTranscript,
    ReplayExhausted,
    ReplayMismatch,
    SerializationError,
    SessionConfig,
    TransportError,
    load_transcript,
)
from mllm_cvrp.orchestrate import NoSolutionAfterRetry, SolveConfig, solve
from mllm_cvrp.promptxml import MODE_TEXT, MODE_VISION
from mllm_cvrp.render import render_layout, render_routes
from mllm_cvrp.tsplib import (
    ParseError,
    format_solution,
    instance_fingerprint,
    parse_instance,
    parse_solution,
)
from mllm_cvrp.validate import InvalidIds, repair_capacity, validate_ids

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_PROBLEMS = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_TRANSPORT = 4
EXIT_UNSERVABLE = 5

EXIT_CODE_DOC = """\
exit codes:
  0  success
  1  completed, but problems found (invalid or infeasible solution,
     no usable model output, or a bench instance with zero successful runs)
  2  usage error (bad arguments, missing file, missing API key)
  3  instance or solution file could not be parsed
  4  transport failure (API error, replay mismatch, corrupt transcript)
  5  unservable instance (a single demand exceeds vehicle capacity)

environment:
  MLLM_CVRP_API_KEY / OPENAI_API_KEY   API key (live and record transports)
  MLLM_CVRP_ENDPOINT                   chat-completions endpoint override
  MLLM_CVRP_RPM                        rate-limit ceiling, requests/minute
  MLLM_CVRP_MODEL, MLLM_CVRP_TEMPERATURE, MLLM_CVRP_MODE,
  MLLM_CVRP_TRANSPORT, MLLM_CVRP_RUNS, MLLM_CVRP_MAX_ITERATIONS
                                       setting overrides (flag beats env)
"""


class CliError(Exception):
    """Usage-level problem; message goes to stderr, exit code 2."""


# name -> (env var, cast, default)
SETTINGS = {
    "model": ("MLLM_CVRP_MODEL", str, "gpt-4-vision-preview"),
    "temperature": ("MLLM_CVRP_TEMPERATURE", float, 1.0),
    "mode": ("MLLM_CVRP_MODE", str, "mllm-v"),
    "transport": ("MLLM_CVRP_TRANSPORT", str, "replay"),
    "runs": ("MLLM_CVRP_RUNS", int, 5),
    "max_iterations": ("MLLM_CVRP_MAX_ITERATIONS", int, 5),
}

MODES = {"mllm-t": MODE_TEXT, "mllm-v": MODE_VISION}


def resolve_settings(args, environ):
    """Apply the precedence chain; returns (values, source-per-value)."""
    file_cfg = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            file_cfg = json.loads(Path(config_path).read_text())
        except OSError as exc:
            raise CliError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(SETTINGS)
        if unknown:
            raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values, sources = {}, {}
    for name, (env_var, cast, default) in SETTINGS.items():
        flag = getattr(args, name, None)
        try:
            if flag is not None:
                values[name], sources[name] = flag, "flag"
            elif env_var in environ:
                values[name], sources[name] = cast(environ[env_var]), "env"
            elif name in file_cfg:
                values[name], sources[name] = cast(file_cfg[name]), "config"
            else:
                values[name], sources[name] = default, "default"
        except (TypeError, ValueError) as exc:
            raise CliError(f"bad value for setting {name!r}: {exc}") from exc
    if values["mode"] not in MODES:
        raise CliError(f"mode must be one of {sorted(MODES)}")
    if values["transport"] not in ("live", "record", "replay"):
        raise CliError("transport must be live, record or replay")
    return values, sources


def require_api_key(environ):
    if not any(environ.get(var) for var in API_KEY_VARS):
        raise CliError(
            f"live/record transport needs an API key in {' or '.join(API_KEY_VARS)}")


def read_instance(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read instance file: {exc}") from exc
    return parse_instance(text)


def read_solution(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read solution file: {exc}") from exc
    return parse_solution(text)


def emit(doc, as_json):
    if as_json:
        print(json.dumps({"schema_version": SCHEMA_VERSION, **doc}, indent=2,
                         sort_keys=True))


def settings_block(values, sources):
    return {"settings": values,
            "settings_source": sources}


def cmd_parse(args, environ):
    summaries, conflict_lines = [], []
    for path in args.instance:
        instance = read_instance(path)
        conflicts = benchmod.check_against_roster(instance)
        conflict_lines.extend(conflicts)
        summaries.append({
            "path": str(path),
            "name": instance.name,
            "customers": instance.n_customers,
            "capacity": instance.capacity,
            "fleet_size": instance.fleet_size,
            "total_demand": instance.total_demand,
            "fingerprint": instance_fingerprint(instance),
            "roster_conflicts": list(conflicts),
        })
    if args.json:
        emit({"instances": summaries}, True)
    else:
        for s in summaries:
            print(f"{s['name']}: {s['customers']} customers, capacity "
                  f"{s['capacity']}, fleet {s['fleet_size']}, total demand "
                  f"{s['total_demand']}")
        for line in conflict_lines:
            print(f"conflict: {line}")
    return EXIT_OK


def cmd_render(args, environ):
    instance = read_instance(args.instance)
    if args.solution:
        solution, _ = read_solution(args.solution)
        rendered = render_routes(instance, solution)
    else:
        rendered = render_layout(instance)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = out_dir / instance.name
    rendered.save(base)
    written = [str(base) + ".png", str(base) + ".svg"]
    if args.json:
        emit({"written": written,
              "markers": rendered.marker_count(),
              "polylines": rendered.polyline_count()}, True)
    else:
        for path in written:
            print(path)
    return EXIT_OK


def cmd_validate(args, environ):
    instance = read_instance(args.instance)
    solution, _ = read_solution(args.solution)
    report = validate_ids(instance, solution)
    feasibility = check_feasibility(instance, solution)
    clean = report.is_empty and feasibility.feasible
    if args.json:
        emit({
            "instance": instance.name,
            "duplicated": list(report.duplicated),
            "missing": list(report.missing),
            "extraneous": list(report.extraneous),
            "capacity_violations": [list(v) for v in feasibility.capacity_violations],
            "served_exactly_once": feasibility.served_exactly_once,
            "feasible": feasibility.feasible,
            "clean": clean,
        }, True)
    else:
        print(f"duplicated IDs: {list(report.duplicated)}")
        print(f"missing IDs: {list(report.missing)}")
        print(f"IDs that should not appear: {list(report.extraneous)}")
        print(f"capacity violations (route, excess): "
              f"{[tuple(v) for v in feasibility.capacity_violations]}")
        print("feasible" if feasibility.feasible else "not feasible")
    return EXIT_OK if clean else EXIT_PROBLEMS


def cmd_repair(args, environ):
    instance = read_instance(args.instance)
    solution, _ = read_solution(args.solution)
    try:
        repaired = repair_capacity(instance, solution)
    except InvalidIds as exc:
        print(f"cannot repair: {exc}", file=sys.stderr)
        return EXIT_PROBLEMS
    cost = solution_cost(instance, repaired)
    out_path = Path(args.output) if args.output else \
        Path(args.solution).with_suffix(".repaired.sol")
    out_path.write_text(format_solution(repaired, cost=cost))
    if args.json:
        emit({"instance": instance.name, "output": str(out_path),
              "cost": cost, "changed": repaired != solution}, True)
    else:
        print(f"wrote {out_path} (cost {cost})")
    return EXIT_OK


def _solve_config(instance, values, args, environ):
    transport = values["transport"]
    if transport == "replay":
        if not args.transcript:
            raise CliError("replay transport requires --transcript")
    else:
        require_api_key(environ)
    if args.examples_dir:
        examples = _load_examples(args)
    else:
        raise CliError("--examples-dir is required (step 1 needs solved examples)")
    for example, _ in examples:
        if example.name == instance.name:
            examples = tuple(p for p in examples if p[0].name != instance.name)
            break
    session = SessionConfig(model=values["model"],
                            temperature=values["temperature"],
                            transport=transport)
    return SolveConfig(
        mode=MODES[values["mode"]],
        solved_examples=examples,
        max_refine_iterations=values["max_iterations"],
        session=session,
        transcript_path=args.transcript,
    )


def _load_examples(args):
    names = tuple(args.example_names) if args.example_names else benchmod.SOLVED_SET
    return benchmod.load_solved_examples(args.examples_dir, names=names)


def cmd_solve(args, environ):
    values, sources = resolve_settings(args, environ)
    instance = read_instance(args.instance)
    config = _solve_config(instance, values, args, environ)
    result = solve(instance, config)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sol_path = out_dir / f"{instance.name}.sol"
    sol_path.write_text(format_solution(result.solution, cost=result.final_cost))
    plot_base = out_dir / f"{instance.name}_routes"
    render_routes(instance, result.solution).save(plot_base)
    summary = {
        "instance": instance.name,
        "mode": result.metadata["mode"],
        "cost_before_repair": result.cost_before_repair,
        "cost_after_repair": result.cost_after_repair,
        "final_cost": result.final_cost,
        "refine_iterations": result.refine_iterations,
        "fallback_used": result.fallback_used,
        "feasible": result.feasibility.feasible,
        "routes": [list(r) for r in result.solution.routes],
        "artifacts": {"solution": str(sol_path),
                      "plot_png": str(plot_base) + ".png",
                      "plot_svg": str(plot_base) + ".svg"},
        **settings_block(values, sources),
    }
    (out_dir / "result.json").write_text(
        json.dumps({"schema_version": SCHEMA_VERSION, **summary},
                   indent=2, sort_keys=True))
    if args.json:
        emit(summary, True)
    else:
        print(f"{instance.name}: cost {result.final_cost} "
              f"({result.refine_iterations} refine iterations, "
              f"{'feasible' if result.feasibility.feasible else 'NOT feasible'})")
        print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_bench(args, environ):
    values, sources = resolve_settings(args, environ)
    manifest = benchmod.load_manifest(args.manifest)
    wanted = args.instances or sorted(manifest)
    missing = [name for name in wanted if name not in manifest]
    if missing:
        raise CliError(f"not in manifest: {', '.join(missing)}")
    instances = []
    for name in wanted:
        path = manifest[name]
        if not Path(path).exists():
            raise CliError(f"manifest entry {name} points at missing file {path}")
        instances.append(read_instance(path))

    method = args.method
    if method in ("mllm-t", "mllm-v"):
        if values["transport"] == "replay":
            if not args.transcript_dir:
                raise CliError("replay transport requires --transcript-dir")
        else:
            require_api_key(environ)
        if not args.examples_dir:
            raise CliError("--examples-dir is required for mllm methods")
        examples = _load_examples(args)
    else:
        examples = ()

    config = benchmod.BenchConfig(
        method=method,
        session=SessionConfig(model=values["model"],
                              temperature=values["temperature"],
                              transport=values["transport"]),
        solved_examples=examples,
        transcript_dir=args.transcript_dir,
        output_dir=args.output_dir,
        workers=args.workers,
        max_refine_iterations=values["max_iterations"],
        seed_base=args.seed,
    )
    report = benchmod.run_benchmark(instances, config, runs=values["runs"])
    print(report.to_markdown())
    meta = {"method": method, "runs": values["runs"],
            "instances": [i.name for i in instances],
            "failures": len(report.failures),
            **settings_block(values, sources)}
    if args.output_dir:
        (Path(args.output_dir) / "bench_meta.json").write_text(
            json.dumps({"schema_version": SCHEMA_VERSION, **meta},
                       indent=2, sort_keys=True))
    all_succeeded = all(row.run_costs for row in report.rows)
    return EXIT_OK if all_succeeded else EXIT_PROBLEMS


def cmd_replay(args, environ):
    transcript = load_transcript(args.transcript)
    doc = {
        "fingerprint": transcript.fingerprint,
        "mode": transcript.mode,
        "model": transcript.model,
        "temperature": transcript.temperature,
        "records": len(transcript.records),
        "images": len(transcript.images),
        "request_hashes": [r.request_hash for r in transcript.records],
    }
    if args.json:
        emit(doc, True)
    else:
        print(f"transcript {args.transcript}: {doc['records']} records, "
              f"mode {doc['mode'] or '?'}, model {doc['model']}, "
              f"{doc['images']} images")
        if args.verbose:
            for i, record in enumerate(transcript.records, 1):
                print(f"--- request {i} ({record.request_hash[:12]}) ---")
                print(record.request_text)
                print(f"--- response {i} ---")
                print(record.response_text)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mllm-cvrp",
        description="Multimodal-LLM CVRP pipeline: parse instances, build "
                    "prompts, solve via chat transports, validate/repair "
                    "solutions, and benchmark against published results.",
        epilog=EXIT_CODE_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--json", action="store_true",
                       help="machine-readable output on stdout")
        p.add_argument("--config", help="JSON config file (lowest precedence "
                                        "after flags and environment)")

    p = sub.add_parser("parse", help="parse instance files and report "
                                     "roster conflicts")
    p.add_argument("instance", nargs="+", help=".vrp file(s)")
    common(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("render", help="draw an instance (and optional "
                                      "solution routes) to PNG+SVG")
    p.add_argument("instance")
    p.add_argument("--solution", help=".sol file to overlay routes from")
    p.add_argument("--output-dir", default=".")
    common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="check a solution's IDs and "
                                        "feasibility (exit 0 iff clean)")
    p.add_argument("instance")
    p.add_argument("solution")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("repair", help="restore capacity feasibility of a "
                                      "valid-ID solution")
    p.add_argument("instance")
    p.add_argument("solution")
    p.add_argument("--output", help="destination .sol (default: "
                                    "<solution>.repaired.sol)")
    common(p)
    p.set_defaults(func=cmd_repair)

    def solve_flags(p):
        p.add_argument("--mode", choices=sorted(MODES))
        p.add_argument("--transport", choices=("live", "record", "replay"))
        p.add_argument("--model")
        p.add_argument("--temperature", type=float)
        p.add_argument("--max-iterations", dest="max_iterations", type=int)
        p.add_argument("--examples-dir",
                       help="directory with the solved-example .vrp/.sol pairs")
        p.add_argument("--example-names", nargs="+",
                       help="which solved pairs to show in step 1 "
                            "(default: the standard solved set)")

    p = sub.add_parser("solve", help="run the three-step workflow on one "
                                     "instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--transcript", help="transcript to replay from or "
                                        "record into")
    p.add_argument("--output-dir", default="out")
    solve_flags(p)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="benchmark instances over repeated "
                                     "runs and write report files")
    p.add_argument("--manifest", required=True,
                   help="name = path listing of instance files")
    p.add_argument("--instances", nargs="*",
                   help="subset of manifest names (default: all)")
    p.add_argument("--method", choices=benchmod.METHODS, default="savings")
    p.add_argument("--runs", type=int)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", type=int, default=0,
                   help="seed base for the random baseline")
    p.add_argument("--transcript-dir",
                   help="per-run transcripts: <name>_<method>_run<k>.jsonl")
    p.add_argument("--output-dir")
    solve_flags(p)
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="inspect a recorded transcript "
                                      "(verifies image sidecar hashes)")
    p.add_argument("transcript")
    p.add_argument("--verbose", action="store_true",
                   help="print full request/response texts")
    common(p)
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None, environ=None):
    environ = os.environ if environ is None else environ
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, environ)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        line = getattr(exc, "line", None)
        where = f" (line {line})" if line else ""
        print(f"parse error{where}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, ReplayMismatch, ReplayExhausted,
            CorruptTranscript, SerializationError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except NoSolutionAfterRetry as exc:
        print(f"no usable model output: {exc}", file=sys.stderr)
        return EXIT_PROBLEMS
    except Unservable as exc:
        print(f"unservable instance: {exc}", file=sys.stderr)
        return EXIT_UNSERVABLE


if __name__ == "__main__":
    sys.exit(main())
