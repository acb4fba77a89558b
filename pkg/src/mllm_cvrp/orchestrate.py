"""The three-step solve workflow.

Step 1 shows solved example problems (text, plus rendered figures in
vision mode) and collects the model's observations; the session history
carries those observations forward.  Step 2 asks for a preliminary
solution of the target.  Step 3 validates customer IDs and iteratively
feeds errors back until the IDs are valid or the iteration cap is hit, at
which point the deterministic fix is applied instead; capacity repair then
produces the final feasible solution.

One fresh session per (instance, run): step 1 re-runs every time, because
runs are independent.  Sessions are single-owner; run many solves in
parallel, not one solve from many threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mllm_cvrp import promptxml as px
from mllm_cvrp.core import FeasibilityReport, Instance, Solution, check_feasibility, solution_cost
from mllm_cvrp.llm import (
    ChatMessage,
    ChatSession,
    ImagePart,
    SessionConfig,
    TextPart,
    Transcript,
    open_session,
    persist_transcript,
)
from mllm_cvrp.render import RenderSpec, render_layout, render_pair
from mllm_cvrp.tsplib import instance_fingerprint
from mllm_cvrp.validate import apply_fix_instruction, repair_capacity, validate_ids


class NoSolutionAfterRetry(RuntimeError):
    """Step 2 produced no parsable solution, even after the format reminder."""


FORMAT_REMINDER = (
    "Your previous reply did not contain a routing solution in the expected "
    "XML format. Reply with only the solution, formatted exactly as:\n"
    "<SOLUTION>\n<route id=1>[...]</route>\n...\n</SOLUTION>\n"
    + px.NO_EXPLANATIONS
)


@dataclass(frozen=True)
class SolveConfig:
    mode: str = px.MODE_VISION
    solved_examples: tuple = ()  # (Instance, Solution) pairs
    max_refine_iterations: int = 5
    session: SessionConfig = field(default_factory=SessionConfig)
    apply_repair: bool = True
    render_spec: RenderSpec = field(default_factory=RenderSpec)
    transcript_path: str | None = None  # replay source / record destination


@dataclass(frozen=True)
class RefineOutcome:
    solution: Solution
    iterations: int  # error prompts sent
    fallback_used: bool


@dataclass(frozen=True)
class SolveResult:
    solution: Solution
    cost_before_repair: float
    cost_after_repair: float | None  # None when repair was not applied
    refine_iterations: int
    fallback_used: bool
    observations: str
    feasibility: FeasibilityReport
    transcript: Transcript
    metadata: dict

    @property
    def final_cost(self) -> float:
        return self.cost_after_repair if self.cost_after_repair is not None \
            else self.cost_before_repair


def _bundle_to_message(bundle: px.PromptBundle) -> ChatMessage:
    """Flatten a PromptBundle into one user message, examples inline."""
    parts: list = [TextPart(bundle.system_preamble)]
    for xml, image in bundle.example_blocks:
        parts.append(TextPart(xml))
        if image is not None:
            parts.append(ImagePart(image))
    if bundle.task_block:
        parts.append(TextPart(bundle.task_block))
    if bundle.task_image is not None:
        parts.append(ImagePart(bundle.task_image))
    if bundle.instruction_tail:
        parts.append(TextPart(bundle.instruction_tail))
    return ChatMessage(role="user", parts=tuple(parts))


def extract_heuristics(session: ChatSession, config: SolveConfig) -> str:
    """Step 1: send the solved examples, return the model's observations."""
    if session.history:
        raise ValueError("step 1 must run on a fresh session")
    vision = config.mode == px.MODE_VISION
    triples = []
    for inst, sol in config.solved_examples:
        image = render_pair(inst, sol, config.render_spec).png if vision else None
        triples.append((inst, sol, image))
    bundle = px.build_step1_prompt(triples, config.mode)
    return session.send(_bundle_to_message(bundle)).text()


def generate_solution(session: ChatSession, target: Instance,
                      config: SolveConfig) -> px.XmlSolutionDoc:
    """Step 2: ask for a preliminary solution; one format-reminder retry."""
    if not session.history:
        raise ValueError("step 2 requires the step-1 exchange in history")
    vision = config.mode == px.MODE_VISION
    layout = render_layout(target, config.render_spec).png if vision else None
    bundle = px.build_step2_prompt(target, config.mode, layout_image=layout)
    reply = session.send(_bundle_to_message(bundle)).text()
    try:
        return px.extract_solution(reply)
    except (px.NoSolutionTag, px.UnparseableRoute):
        pass
    reply = session.send(ChatMessage.user(FORMAT_REMINDER)).text()
    try:
        return px.extract_solution(reply)
    except (px.NoSolutionTag, px.UnparseableRoute) as exc:
        raise NoSolutionAfterRetry(f"no usable solution after reminder: {exc}") from exc


def refine_loop(session: ChatSession, target: Instance,
                candidate: px.XmlSolutionDoc, config: SolveConfig) -> RefineOutcome:
    """Step 3: error-prompt iterations until IDs validate; deterministic
    fix after the cap (or if a correction reply is unparsable), so the loop
    always terminates with a valid-ID solution."""
    doc = candidate
    for iteration in range(config.max_refine_iterations + 1):
        report = validate_ids(target, doc.to_solution())
        if report.is_empty:
            return RefineOutcome(doc.to_solution(), iteration, False)
        if iteration == config.max_refine_iterations:
            break
        reply = session.send(
            ChatMessage.user(px.build_error_prompt(doc, report))).text()
        try:
            doc = px.extract_solution(reply)
        except (px.NoSolutionTag, px.UnparseableRoute):
            fixed = apply_fix_instruction(doc.to_solution(), report)
            return RefineOutcome(fixed, iteration + 1, True)
    report = validate_ids(target, doc.to_solution())
    fixed = apply_fix_instruction(doc.to_solution(), report)
    return RefineOutcome(fixed, config.max_refine_iterations, True)


def solve(target: Instance, config: SolveConfig,
          session: ChatSession | None = None) -> SolveResult:
    """Run the full workflow on one fresh session and return the result.

    A pre-built session may be injected (tests, custom transports);
    otherwise one is opened per the session config.  In record mode the
    transcript lands at config.transcript_path when the run completes.
    """
    fingerprint = instance_fingerprint(target)
    for inst, _ in config.solved_examples:
        if instance_fingerprint(inst) == fingerprint:
            raise ValueError(
                f"target {target.name} appears among the solved examples")

    if session is None:
        session = open_session(config.session, fingerprint=fingerprint,
                               mode=config.mode,
                               transcript_path=config.transcript_path)
    else:
        session.transcript.fingerprint = fingerprint
        session.transcript.mode = config.mode

    observations = extract_heuristics(session, config)
    doc = generate_solution(session, target, config)
    outcome = refine_loop(session, target, doc, config)

    cost_before = solution_cost(target, outcome.solution)
    final = outcome.solution
    cost_after = None
    if config.apply_repair:
        final = repair_capacity(target, outcome.solution)
        cost_after = solution_cost(target, final)

    if config.session.transport == "record" and config.transcript_path:
        persist_transcript(session.transcript, config.transcript_path)

    return SolveResult(
        solution=final,
        cost_before_repair=cost_before,
        cost_after_repair=cost_after,
        refine_iterations=outcome.iterations,
        fallback_used=outcome.fallback_used,
        observations=observations,
        feasibility=check_feasibility(target, final),
        transcript=session.transcript,
        metadata={
            "instance": target.name,
            "fingerprint": fingerprint,
            "mode": config.mode,
            "model": config.session.model,
            "transport": config.session.transport,
            "max_refine_iterations": config.max_refine_iterations,
            "apply_repair": config.apply_repair,
            "step1_policy": "per-run",
        },
    )
