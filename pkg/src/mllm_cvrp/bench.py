"""Baseline solvers and the benchmark harness.

Each instance is solved `runs` times per method, the lowest and average
traveling costs are tabulated next to the best-known optimum, and quality
is the relative gap of the average.  The published benchmark figures this
harness is compared against are bundled as constants (`ROSTER`,
`PUBLISHED_RESULTS`) so the reporting pipeline can be checked without any
model access.
"""

from __future__ import annotations

import csv
import io
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from mllm_cvrp.core import (
    Instance,
    Solution,
    Unservable,
    distance,
    format_gap,
    gap,
    solution_cost,
)
from mllm_cvrp.llm import SessionConfig
from mllm_cvrp.orchestrate import SolveConfig, solve
from mllm_cvrp.promptxml import MODE_TEXT, MODE_VISION
from mllm_cvrp.render import RenderSpec, render_routes
from mllm_cvrp.tsplib import parse_instance, parse_solution


# Benchmark roster: name -> (customer count as printed, fleet size, capacity).
# Where a printed value disagrees with the instance file, the file wins and
# the disagreement is surfaced by check_against_roster().
ROSTER = {
    "P-n19-k2": (18, 2, 160),
    "A-n32-k5": (32, 5, 100),
    "A-n36-k5": (36, 5, 100),
    "A-n38-k5": (38, 5, 100),
    "A-n39-k5": (39, 5, 100),
    "A-n44-k6": (44, 6, 100),
    "A-n46-k7": (46, 7, 100),
    "E-n51-k5": (51, 5, 160),
    "A-n65-k9": (65, 9, 100),
    "A-n69-k9": (69, 9, 100),
    "P-n55-k10": (55, 10, 115),
    "P-n65-k10": (65, 10, 130),
    "P-n70-k10": (70, 10, 135),
    "X-n139-k10": (139, 10, 106),
    "X-n143-k7": (143, 7, 1190),
    "X-n153-k22": (153, 23, 144),
    "X-n162-k11": (162, 11, 1174),
    "A-n45-k6": (45, 6, 100),
    "P-n60-k10": (60, 10, 120),
    "E-n101-k14": (101, 14, 112),
}

# Published results: name -> (optimal,
#                             text-mode best, average, printed gap %,
#                             vision-mode best, average, printed gap %).
PUBLISHED_RESULTS = {
    "P-n19-k2": (213, 263, 292, 31, 235, 260, 22),
    "A-n32-k5": (788, 1073, 1161, 47, 1040, 1141, 45),
    "A-n36-k5": (802, 1068, 1210, 51, 1147, 1229, 53),
    "A-n38-k5": (734, 981, 1132, 54, 982, 1040, 42),
    "A-n39-k5": (829, 1222, 1366, 65, 1112, 1300, 57),
    "A-n44-k6": (939, 1449, 1568, 67, 1319, 1445, 54),
    "A-n46-k7": (918, 1388, 1566, 70, 1430, 1565, 70),
    "A-n65-k9": (1182, 1979, 2143, 81, 1848, 2124, 80),
    "A-n69-k9": (1166, 2062, 2161, 85, 1807, 2104, 80),
    "E-n51-k5": (525, 897, 1022, 95, 825, 881, 68),
    "P-n55-k10": (698, 991, 1045, 50, 892, 985, 41),
    "P-n65-k10": (797, 1205, 1269, 59, 1098, 1223, 54),
    "P-n70-k10": (830, 1417, 1558, 88, 1218, 1299, 56),
    "X-n139-k10": (13596, 30763, 42475, 212, 28568, 33163, 144),
    "X-n143-k7": (15697, 46831, 51238, 226, 38493, 52339, 233),
    "X-n153-k22": (21227, 44070, 53435, 152, 39955, 49732, 134),
    "X-n162-k11": (14139, 33193, 42320, 199, 31518, 38227, 170),
}

PUBLISHED_OPTIMA = {name: row[0] for name, row in PUBLISHED_RESULTS.items()}

# The three instances whose solved solutions seed the step-1 prompt.
SOLVED_SET = ("A-n45-k6", "P-n60-k10", "E-n101-k14")

METHODS = ("mllm-t", "mllm-v", "random", "savings")

MODE_LABELS = {"mllm-t": MODE_TEXT, "mllm-v": MODE_VISION,
               "random": "random", "savings": "savings"}

REPORT_LEGEND = ("B.Cost = lowest traveling cost over the runs "
                 "(the source table's caption calls this L.Cost); "
                 "A.Cost = average; Gap = (A.Cost - Optimal) / Optimal.")


def random_solution(instance: Instance, seed: int) -> Solution:
    """Shuffle the customers under `seed`, then cut greedily at capacity."""
    oversized = instance.oversized_demands()
    if oversized:
        raise Unservable(f"demand exceeds capacity for customers {oversized}")
    ids = list(range(1, instance.n_customers + 1))
    random.Random(seed).shuffle(ids)
    routes, current, load = [], [], 0
    for cid in ids:
        d = instance.customer(cid).demand
        if current and load + d > instance.capacity:
            routes.append(tuple(current))
            current, load = [], 0
        current.append(cid)
        load += d
    if current:
        routes.append(tuple(current))
    return Solution(routes=tuple(routes))


def savings_solve(instance: Instance) -> Solution:
    """Parallel-savings construction (merge route ends by decreasing
    saving, higher first, ties broken by the lower (i, j) node pair)."""
    oversized = instance.oversized_demands()
    if oversized:
        raise Unservable(f"demand exceeds capacity for customers {oversized}")
    n = instance.n_customers
    depot = instance.depot
    pos = {c.id: (c.x, c.y) for c in instance.customers}
    dem = {c.id: c.demand for c in instance.customers}

    def dist(a, b):
        return distance(a, b, instance.rounding)

    routes = {i: [i] for i in range(1, n + 1)}
    load = {i: dem[i] for i in range(1, n + 1)}
    owner = {i: i for i in range(1, n + 1)}  # endpoint customer -> route key

    savings = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            s = dist(depot, pos[i]) + dist(depot, pos[j]) - dist(pos[i], pos[j])
            savings.append((s, i, j))
    savings.sort(key=lambda t: (-t[0], t[1], t[2]))

    for s, i, j in savings:
        ri, rj = owner.get(i), owner.get(j)
        if ri is None or rj is None or ri == rj:
            continue
        if load[ri] + load[rj] > instance.capacity:
            continue
        a, b = routes[ri], routes[rj]
        if a[-1] == i and b[0] == j:
            merged = a + b
        elif a[0] == i and b[-1] == j:
            merged = b + a
        elif a[-1] == i and b[-1] == j:
            merged = a + b[::-1]
        else:  # a[0] == i and b[0] == j
            merged = a[::-1] + b
        del routes[rj]
        routes[ri] = merged
        load[ri] += load[rj]
        owner[merged[0]] = owner[merged[-1]] = ri
        for inner in merged[1:-1]:
            owner.pop(inner, None)

    ordered = sorted(routes.values(), key=lambda r: min(r))
    return Solution(routes=tuple(tuple(r) for r in ordered))


@dataclass(frozen=True)
class BenchRow:
    problem: str
    optimal: float | None
    run_costs: tuple  # successful runs only
    mode: str
    runs: int  # attempted

    @property
    def best_cost(self):
        return min(self.run_costs) if self.run_costs else None

    @property
    def average_cost(self):
        return statistics.mean(self.run_costs) if self.run_costs else None

    @property
    def gap_ratio(self):
        if self.optimal is None or not self.run_costs:
            return None
        return gap(self.average_cost, self.optimal)

    @property
    def gap_percent(self):
        ratio = self.gap_ratio
        return None if ratio is None else format_gap(ratio)


@dataclass(frozen=True)
class BenchFailure:
    problem: str
    mode: str
    run: int
    error: str


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    best_solutions: dict = field(default_factory=dict)  # (problem, mode) -> Solution

    def row(self, problem: str, mode: str) -> BenchRow:
        for r in self.rows:
            if r.problem == problem and r.mode == mode:
                return r
        raise KeyError((problem, mode))

    def modes(self) -> list:
        seen = []
        for r in self.rows:
            if r.mode not in seen:
                seen.append(r.mode)
        return seen

    def problems(self) -> list:
        seen = []
        for r in self.rows:
            if r.problem not in seen:
                seen.append(r.problem)
        return seen

    def _cells(self, problem, mode):
        try:
            r = self.row(problem, mode)
        except KeyError:
            return ("-", "-", "-")
        if not r.run_costs:
            return ("fail", "fail", "-")
        avg = r.average_cost
        avg_text = f"{avg:g}" if avg != int(avg) else f"{int(avg)}"
        return (f"{r.best_cost:g}", avg_text, r.gap_percent or "-")

    def to_csv(self) -> str:
        modes = self.modes()
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        header = ["Problem", "Optimal"]
        for m in modes:
            header += [f"{m} B.Cost", f"{m} A.Cost", f"{m} Gap"]
        writer.writerow(header)
        for p in self.problems():
            optimal = next(r.optimal for r in self.rows if r.problem == p)
            line = [p, "" if optimal is None else f"{optimal:g}"]
            for m in modes:
                line += list(self._cells(p, m))
            writer.writerow(line)
        return out.getvalue()

    def to_markdown(self) -> str:
        modes = self.modes()
        head = ["Problem", "Optimal"]
        for m in modes:
            head += [f"{m} B.Cost", f"{m} A.Cost", f"{m} Gap"]
        lines = ["| " + " | ".join(head) + " |",
                 "|" + "---|" * len(head)]
        for p in self.problems():
            optimal = next(r.optimal for r in self.rows if r.problem == p)
            cells = [p, "-" if optimal is None else f"{optimal:g}"]
            for m in modes:
                cells += list(self._cells(p, m))
            lines.append("| " + " | ".join(cells) + " |")
        lines.append("")
        lines.append(REPORT_LEGEND)
        if self.failures:
            lines.append("")
            lines.append("Failed runs (excluded from A.Cost):")
            for f in self.failures:
                lines.append(f"- {f.problem} [{f.mode}] run {f.run}: {f.error}")
        return "\n".join(lines) + "\n"

    def write(self, output_dir, spec: RenderSpec | None = None) -> list:
        """Emit report.csv, report.md and per-(instance, mode) best-run
        plots; returns the written paths."""
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in (("report.csv", self.to_csv()),
                           ("report.md", self.to_markdown())):
            path = out / name
            path.write_text(text)
            written.append(path)
        plot_dir = out / "plots"
        for (problem, mode), (instance, solution) in sorted(self.best_solutions.items()):
            plot_dir.mkdir(parents=True, exist_ok=True)
            rendered = render_routes(instance, solution, spec or RenderSpec())
            path = plot_dir / f"{problem}_{mode}_best.png"
            path.write_bytes(rendered.png)
            written.append(path)
        return written


@dataclass(frozen=True)
class BenchConfig:
    method: str = "savings"
    session: SessionConfig = field(default_factory=SessionConfig)
    solved_examples: tuple = ()
    transcript_dir: str | None = None  # one transcript per (instance, run)
    output_dir: str | None = None
    workers: int = 4
    max_refine_iterations: int = 5
    seed_base: int = 0
    optima: dict = field(default_factory=lambda: dict(PUBLISHED_OPTIMA))
    render_spec: RenderSpec = field(default_factory=RenderSpec)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; pick from {METHODS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def transcript_path(transcript_dir, instance_name: str, method: str, run: int) -> Path:
    return Path(transcript_dir) / f"{instance_name}_{method}_run{run}.jsonl"


def _one_run(instance: Instance, config: BenchConfig, run: int):
    method = config.method
    if method == "random":
        solution = random_solution(instance, config.seed_base + run)
    elif method == "savings":
        solution = savings_solve(instance)
    else:
        path = None
        if config.transcript_dir is not None:
            path = str(transcript_path(config.transcript_dir, instance.name,
                                       method, run))
        solve_config = SolveConfig(
            mode=MODE_LABELS[method],
            solved_examples=config.solved_examples,
            max_refine_iterations=config.max_refine_iterations,
            session=config.session,
            render_spec=config.render_spec,
            transcript_path=path,
        )
        solution = solve(instance, solve_config).solution
    return solution_cost(instance, solution), solution


def run_benchmark(instances: list, config: BenchConfig, runs: int) -> BenchReport:
    """Solve every instance `runs` times with the configured method and
    tabulate the results.  Failures are recorded per run and never abort
    the batch; failed runs carry no cost and are excluded from averages."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    mode = MODE_LABELS[config.method]
    jobs = [(instance, run) for instance in instances for run in range(1, runs + 1)]
    results = {}

    def work(job):
        instance, run = job
        return _one_run(instance, config, run)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {pool.submit(work, job): job for job in jobs}
        for future, (instance, run) in futures.items():
            try:
                results[(instance.name, run)] = future.result()
            except Exception as exc:  # recorded, not raised
                results[(instance.name, run)] = exc

    report = BenchReport()
    for instance in instances:
        costs = []
        best = None
        for run in range(1, runs + 1):
            outcome = results[(instance.name, run)]
            if isinstance(outcome, Exception):
                report.failures.append(BenchFailure(
                    instance.name, mode, run,
                    f"{type(outcome).__name__}: {outcome}"))
                continue
            cost, solution = outcome
            costs.append(cost)
            if best is None or cost < best[0]:
                best = (cost, solution)
        report.rows.append(BenchRow(
            problem=instance.name,
            optimal=config.optima.get(instance.name),
            run_costs=tuple(costs),
            mode=mode,
            runs=runs,
        ))
        if best is not None:
            report.best_solutions[(instance.name, mode)] = (instance, best[1])
    if config.output_dir is not None:
        report.write(config.output_dir, config.render_spec)
    return report


def load_manifest(path) -> dict:
    """Read the `name = relative/path` instance listing; paths resolve
    relative to the manifest's own directory."""
    manifest_path = Path(path)
    base = manifest_path.parent
    mapping = {}
    for lineno, raw in enumerate(manifest_path.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{manifest_path}:{lineno}: expected 'name = path'")
        name, _, rel = line.partition("=")
        mapping[name.strip()] = base / rel.strip()
    return mapping


def load_provenance(path) -> dict:
    """Read the `name status` data-provenance listing (statuses:
    verified, reconstructed, stand-in)."""
    mapping = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, _, status = line.partition(" ")
        mapping[name.strip()] = status.strip()
    return mapping


def load_instance_file(path) -> Instance:
    return parse_instance(Path(path).read_text())


def load_solution_file(path):
    return parse_solution(Path(path).read_text())


def load_solved_examples(data_dir, names=SOLVED_SET) -> tuple:
    """Load the (instance, solution) pairs that seed the step-1 prompt."""
    base = Path(data_dir)
    pairs = []
    missing = []
    for name in names:
        vrp, sol = base / f"{name}.vrp", base / f"{name}.sol"
        if not vrp.exists() or not sol.exists():
            missing.append(name)
            continue
        instance = load_instance_file(vrp)
        solution, _ = load_solution_file(sol)
        pairs.append((instance, solution))
    if missing:
        raise FileNotFoundError(
            f"missing .vrp/.sol pair for solved examples: {', '.join(missing)}")
    return tuple(pairs)


def check_against_roster(instance: Instance) -> tuple:
    """Compare a parsed instance against the bundled benchmark roster;
    returns human-readable conflict lines (the file always wins)."""
    row = ROSTER.get(instance.name)
    if row is None:
        return (f"{instance.name}: not in the benchmark roster",)
    printed_n, printed_fleet, printed_capacity = row
    conflicts = []
    if instance.capacity != printed_capacity:
        conflicts.append(
            f"{instance.name}: capacity {instance.capacity} (file) vs "
            f"{printed_capacity} (roster) — using file")
    if instance.fleet_size != printed_fleet:
        conflicts.append(
            f"{instance.name}: fleet size {instance.fleet_size} (file) vs "
            f"{printed_fleet} (roster) — using file")
    # The published size column mixes node counts and customer counts
    # between rows, so either reading is accepted.
    if instance.n_customers not in (printed_n, printed_n - 1):
        conflicts.append(
            f"{instance.name}: {instance.n_customers} customers (file) vs "
            f"{printed_n} printed — using file")
    return tuple(conflicts)


def published_gap_check() -> list:
    """Recompute every published gap from its own (optimal, average) pair;
    returns (problem, mode, printed %, recomputed %) tuples."""
    out = []
    for name, row in PUBLISHED_RESULTS.items():
        optimal, _, t_avg, t_gap, _, v_avg, v_gap = row
        for mode, avg, printed in ((MODE_TEXT, t_avg, t_gap),
                                   (MODE_VISION, v_avg, v_gap)):
            recomputed = round(gap(avg, optimal) * 100)
            out.append((name, mode, printed, recomputed))
    return out
