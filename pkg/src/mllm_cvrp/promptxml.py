"""XML prompt schema: serialize instances for the chat model, build the
three workflow prompts, and tolerantly extract solutions from replies.

The schema is frozen — prompt text is part of the method and must be
byte-stable for transcript replay:

    <CVRP name={} n_customer={} capacity={}>
    <Depot>x={} y={}</Depot>
    <Customers>
    <customer id={} x={} y={} demand={} />
    ...
    </Customers>
    <SOLUTION>
    <route id={}>[id,id,...]</route>
    ...
    </SOLUTION>
    </CVRP>

Attribute values are unquoted, matching the documented schema lines.
Extraction is deliberately forgiving (prose, code fences, attribute noise,
case differences) because generative replies vary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from mllm_cvrp.core import Instance, Solution
from mllm_cvrp.validate import ValidationReport


class EmptyExampleSet(ValueError):
    """Step 1 needs at least one solved example."""


class EmptyReport(ValueError):
    """No error prompt can be built from a clean validation report."""


class NoSolutionTag(ValueError):
    """Reply contains no <SOLUTION>...</SOLUTION> region."""


class UnparseableRoute(ValueError):
    """A <route> payload is not an integer list."""


MODE_TEXT = "MLLM-T"
MODE_VISION = "MLLM-V"

NO_EXPLANATION = "No Explanation Needed."
NO_EXPLANATIONS = "No Explanations Needed"


@dataclass(frozen=True)
class PromptBundle:
    """One prompt's parts: shared preamble, per-example blocks (text and, in
    vision mode, a rendered figure), the task block, and the closing
    instruction."""

    system_preamble: str
    example_blocks: tuple = ()  # (xml text, png bytes | None) pairs
    task_block: str = ""
    instruction_tail: str = ""
    task_image: bytes | None = None

    def text(self) -> str:
        """All textual parts joined, in send order (for tests/diagnostics)."""
        parts = [self.system_preamble]
        parts += [xml for xml, _ in self.example_blocks]
        if self.task_block:
            parts.append(self.task_block)
        if self.instruction_tail:
            parts.append(self.instruction_tail)
        return "\n\n".join(p for p in parts if p)


@dataclass(frozen=True)
class XmlSolutionDoc:
    """Routes as (route id, ids) pairs; may be invalid — candidates are
    checked downstream, not here."""

    routes: tuple[tuple[int, tuple[int, ...]], ...] = ()

    def to_solution(self) -> Solution:
        return Solution(routes=tuple(ids for _, ids in self.routes))

    @classmethod
    def from_solution(cls, solution: Solution) -> "XmlSolutionDoc":
        return cls(routes=tuple(
            (i, route) for i, route in enumerate(solution.routes, start=1)))


def _fmt(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def _route_line(route_id: int, ids) -> str:
    return f"<route id={route_id}>[{','.join(str(i) for i in ids)}]</route>"


def solution_to_xml(solution: Solution) -> str:
    lines = ["<SOLUTION>"]
    lines += [_route_line(i, r) for i, r in enumerate(solution.routes, start=1)]
    lines.append("</SOLUTION>")
    return "\n".join(lines)


def instance_to_xml(instance: Instance, include_solution: Solution | None = None) -> str:
    """The instance as schema text; the SOLUTION block appears only when a
    solution is supplied (step 2 sends the target without one)."""
    lines = [
        f"<CVRP name={instance.name} n_customer={instance.n_customers} "
        f"capacity={instance.capacity}>",
        f"<Depot>x={_fmt(instance.depot[0])} y={_fmt(instance.depot[1])}</Depot>",
        "<Customers>",
    ]
    lines += [
        f"<customer id={c.id} x={_fmt(c.x)} y={_fmt(c.y)} demand={c.demand} />"
        for c in instance.customers
    ]
    lines.append("</Customers>")
    if include_solution is not None:
        lines.append(solution_to_xml(include_solution))
    lines.append("</CVRP>")
    return "\n".join(lines)


_SCHEMA_WITH_SOLUTION = (
    "<CVRP name={} n_customer={} capacity={}>\n"
    "<Depot>...</Depot>\n"
    "<Customers>...</Customers>\n"
    "<SOLUTION>...</SOLUTION>\n"
    "</CVRP>"
)

_SCHEMA_WITHOUT_SOLUTION = (
    "<CVRP name={} n_customer={} capacity={}>\n"
    "<Depot>...</Depot>\n"
    "<Customers>...</Customers>\n"
    "</CVRP>"
)


def build_step1_prompt(solved, mode: str) -> PromptBundle:
    """The heuristic-extraction prompt over solved examples.

    ``solved`` holds (Instance, Solution, png bytes | None) triples; the
    image slot must be filled exactly in vision mode.
    """
    solved = list(solved)
    if not solved:
        raise EmptyExampleSet("step 1 requires at least one solved example")
    vision = mode == MODE_VISION
    for inst, _, image in solved:
        if vision and image is None:
            raise ValueError(f"vision mode needs a rendered figure for {inst.name}")
        if not vision and image is not None:
            raise ValueError(f"text mode must not carry images ({inst.name})")

    preamble = [
        "You will help me create initial high-quality solutions for the "
        "Capacitated Vehicle Routing Problems (CVRPs).",
        "To create initial high-quality solutions for the new CVRPs, I will "
        "first show you some solved CVRPs as examples.",
        "The following format is used to describe each solved CVRP with text "
        "information, where {} denotes variables:",
        _SCHEMA_WITH_SOLUTION,
    ]
    if vision:
        preamble += [
            "Now you will be provided with several solved CVRPs with the "
            "description of XML text and the figure with original topological "
            "layout and optimal traveling routes.",
            'Each figure consists of two sub-figures: the left part (marked as '
            '"A") shows the original layout, while the right part (marked as '
            '"B") illustrates the layout with the optimal traveling routes.',
        ]
        tail = (
            "You may start by finding the accurate customer mapping between "
            "the XML document and the sub-figures according to the IDs, and "
            "then return the observations you found."
        )
    else:
        preamble.append(
            "Now you will be provided with several solved CVRPs with the "
            "description of XML text.")
        tail = (
            "You may start by studying the XML documents carefully, and then "
            "return the observations you found.")

    blocks = tuple(
        (instance_to_xml(inst, include_solution=sol), image)
        for inst, sol, image in solved
    )
    return PromptBundle(
        system_preamble="\n".join(preamble),
        example_blocks=blocks,
        instruction_tail=tail,
    )


def build_step2_prompt(target: Instance, mode: str,
                       layout_image: bytes | None = None) -> PromptBundle:
    """The solution-generation prompt: target without its solution.

    Never mentions the SOLUTION tag by its literal markup — the outgoing
    text must not contain that substring (checked by tests; it would mask
    extraction bugs and break the without-solution contract).
    """
    vision = mode == MODE_VISION
    if vision and layout_image is None:
        raise ValueError("vision mode needs the layout-only figure")
    if not vision and layout_image is not None:
        raise ValueError("text mode must not carry images")

    if vision:
        intro = (
            "Now you are presented with an unsolved CVRP with the description "
            "of XML text (without the solution block) and the topological "
            "layout picture (without the figure of optimal traveling routes):"
        )
    else:
        intro = (
            "Now you are presented with an unsolved CVRP with the description "
            "of XML text (without the solution block):"
        )
    preamble = "\n".join([intro, _SCHEMA_WITHOUT_SOLUTION])
    tail = "\n".join([
        f"Kindly return me the complete preliminary solution of {target.name} "
        "in XML format, adhering to the heuristics that you have previously "
        "acquired.",
        NO_EXPLANATION,
    ])
    return PromptBundle(
        system_preamble=preamble,
        task_block=instance_to_xml(target),
        instruction_tail=tail,
        task_image=layout_image,
    )


def _id_list(ids) -> str:
    return f"[{','.join(str(i) for i in ids)}]"


def build_error_prompt(candidate: XmlSolutionDoc, report: ValidationReport) -> str:
    """The correction prompt: echoes the candidate and names every offending
    ID category verbatim."""
    if report.is_empty:
        raise EmptyReport("validation passed; nothing to correct")
    lines = [
        "Your routing solution is invalid. To return valid routes, refine the "
        "ones below by removing duplicate customer IDs and adding missing ones:",
        "<SOLUTION>",
    ]
    lines += [_route_line(rid, ids) for rid, ids in candidate.routes]
    lines += [
        "</SOLUTION>",
        f"The duplicated customer IDs are given by: {_id_list(report.duplicated)}, "
        f"the missed customer IDs are given by: {_id_list(report.missing)}, "
        "and the customer IDs which should not appear are given by: "
        f"{_id_list(report.extraneous)}",
        "Please remove the duplicated IDs and the IDs should not appear, and "
        "add the missed IDs to the route with minimum customers",
        NO_EXPLANATIONS,
    ]
    return "\n".join(lines)


_SOLUTION_RE = re.compile(r"<\s*SOLUTION[^>]*>(.*?)<\s*/\s*SOLUTION\s*>",
                          re.IGNORECASE | re.DOTALL)
_ROUTE_RE = re.compile(r"<\s*route\b([^>]*)>(.*?)<\s*/\s*route\s*>",
                       re.IGNORECASE | re.DOTALL)
_ID_ATTR_RE = re.compile(r"\bid\s*=\s*\"?(\d+)", re.IGNORECASE)


def extract_solution(reply: str) -> XmlSolutionDoc:
    """Pull the first SOLUTION region out of a model reply.

    Tolerates surrounding prose and code fences; payloads may be bracketed
    "[1,2,3]" or bare "1 2 3".  Raises NoSolutionTag / UnparseableRoute —
    the orchestrator turns those into a re-ask, not a crash.
    """
    m = _SOLUTION_RE.search(reply)
    if m is None:
        raise NoSolutionTag("no <SOLUTION> region in reply")
    routes = []
    for i, route_match in enumerate(_ROUTE_RE.finditer(m.group(1)), start=1):
        attrs, payload = route_match.groups()
        id_match = _ID_ATTR_RE.search(attrs)
        route_id = int(id_match.group(1)) if id_match else i
        cleaned = payload.strip().strip("[]").strip()
        ids = []
        for token in re.split(r"[,\s]+", cleaned):
            if not token:
                continue
            try:
                ids.append(int(token))
            except ValueError:
                raise UnparseableRoute(
                    f"route {route_id}: non-integer token {token!r}") from None
        routes.append((route_id, tuple(ids)))
    return XmlSolutionDoc(routes=tuple(routes))
