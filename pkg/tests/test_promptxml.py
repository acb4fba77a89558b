"""Prompt schema: serialization, the three prompts, tolerant extraction."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mllm_cvrp import promptxml as px
from mllm_cvrp.core import Instance, Solution
from mllm_cvrp.validate import ValidationReport, validate_ids

from helpers import candidates, instances, make_instance, partitions


def tiny():
    return make_instance([(10, 20), (30, 5)], [4, 7], capacity=50,
                         name="tiny-n3-k1", depot=(1, 2), fleet_size=1)


def test_instance_xml_golden():
    expected = (
        "<CVRP name=tiny-n3-k1 n_customer=2 capacity=50>\n"
        "<Depot>x=1 y=2</Depot>\n"
        "<Customers>\n"
        "<customer id=1 x=10 y=20 demand=4 />\n"
        "<customer id=2 x=30 y=5 demand=7 />\n"
        "</Customers>\n"
        "</CVRP>"
    )
    assert px.instance_to_xml(tiny()) == expected


def test_instance_xml_with_solution_block():
    xml = px.instance_to_xml(tiny(), include_solution=Solution(routes=((2, 1),)))
    assert "<SOLUTION>\n<route id=1>[2,1]</route>\n</SOLUTION>" in xml
    assert xml.index("</Customers>") < xml.index("<SOLUTION>") < xml.index("</CVRP>")


def test_zero_customer_instance_serializes():
    inst = Instance("empty-n1-k1", (0, 0), (), capacity=1, fleet_size=1)
    xml = px.instance_to_xml(inst)
    assert "<Customers>\n</Customers>" in xml
    assert "n_customer=0" in xml


def test_benchmark_instance_attributes(data_dir):
    from mllm_cvrp import tsplib

    inst = tsplib.parse_instance((data_dir / "P-n19-k2.vrp").read_text())
    xml = px.instance_to_xml(inst)
    assert "name=P-n19-k2 n_customer=18 capacity=160>" in xml
    assert "<SOLUTION" not in xml


# ---------------------------------------------------------------- step prompts

def solved_triples(mode):
    img = b"\x89PNG fake" if mode == px.MODE_VISION else None
    triples = []
    for name in ("a-n3-k1", "b-n3-k1", "c-n3-k1"):
        inst = make_instance([(1, 1), (2, 2)], [1, 1], name=name)
        triples.append((inst, Solution(routes=((1, 2),)), img))
    return triples


def test_step1_vision_carries_one_image_per_example():
    bundle = px.build_step1_prompt(solved_triples(px.MODE_VISION), px.MODE_VISION)
    assert len(bundle.example_blocks) == 3
    assert all(img is not None for _, img in bundle.example_blocks)
    assert "sub-figures" in bundle.system_preamble
    assert "customer mapping" in bundle.instruction_tail


def test_step1_text_mode_has_no_images():
    bundle = px.build_step1_prompt(solved_triples(px.MODE_TEXT), px.MODE_TEXT)
    assert len(bundle.example_blocks) == 3
    assert all(img is None for _, img in bundle.example_blocks)
    assert "figure" not in bundle.system_preamble.split("format")[0]


def test_step1_requires_examples():
    with pytest.raises(px.EmptyExampleSet):
        px.build_step1_prompt([], px.MODE_TEXT)


def test_step1_vision_requires_images():
    triples = solved_triples(px.MODE_TEXT)  # images all None
    with pytest.raises(ValueError):
        px.build_step1_prompt(triples, px.MODE_VISION)


def test_step2_has_target_without_solution():
    bundle = px.build_step2_prompt(tiny(), px.MODE_TEXT)
    assert "name=tiny-n3-k1" in bundle.task_block
    assert "Kindly return me the complete preliminary solution of tiny-n3-k1" \
        in bundle.instruction_tail
    assert bundle.instruction_tail.endswith("No Explanation Needed.")
    assert bundle.task_image is None


def test_step2_vision_attaches_layout():
    bundle = px.build_step2_prompt(tiny(), px.MODE_VISION, layout_image=b"png")
    assert bundle.task_image == b"png"
    with pytest.raises(ValueError):
        px.build_step2_prompt(tiny(), px.MODE_VISION)


@given(instances(max_customers=10))
def test_step2_never_mentions_the_solution_tag(inst):
    bundle = px.build_step2_prompt(inst, px.MODE_TEXT)
    assert "<SOLUTION" not in bundle.text()


def test_prompts_are_deterministic():
    a = px.build_step1_prompt(solved_triples(px.MODE_TEXT), px.MODE_TEXT)
    b = px.build_step1_prompt(solved_triples(px.MODE_TEXT), px.MODE_TEXT)
    assert a == b and a.text() == b.text()


# ---------------------------------------------------------------- error prompt

def correction_example():
    doc = px.XmlSolutionDoc(routes=((1, (1, 3, 7, 9, 9)), (2, (2, 4, 6, 8, 10, 11))))
    report = ValidationReport(duplicated=(9,), missing=(5,), extraneous=(11,))
    return doc, report


def test_error_prompt_names_all_three_lists():
    doc, report = correction_example()
    text = px.build_error_prompt(doc, report)
    assert "Your routing solution is invalid." in text
    assert "<route id=1>[1,3,7,9,9]</route>" in text
    assert "<route id=2>[2,4,6,8,10,11]</route>" in text
    assert "The duplicated customer IDs are given by: [9]" in text
    assert "the missed customer IDs are given by: [5]" in text
    assert "the customer IDs which should not appear are given by: [11]" in text
    assert "add the missed IDs to the route with minimum customers" in text
    assert text.endswith("No Explanations Needed")


def test_error_prompt_lists_every_reported_id_once():
    doc = px.XmlSolutionDoc(routes=((1, (1, 1, 2, 2, 9)),))
    report = ValidationReport(duplicated=(1, 2), missing=(3, 4), extraneous=(9,))
    text = px.build_error_prompt(doc, report)
    assert "given by: [1,2]," in text
    assert "given by: [3,4]," in text
    assert "given by: [9]" in text


def test_error_prompt_requires_problems():
    doc, _ = correction_example()
    with pytest.raises(px.EmptyReport):
        px.build_error_prompt(doc, ValidationReport((), (), ()))


# ---------------------------------------------------------------- extraction

CORRECTION_XML = (
    "<SOLUTION>\n"
    "<route id=1>[1,3,7,9,9]</route>\n"
    "<route id=2>[2,4,6,8,10,11]</route>\n"
    "</SOLUTION>"
)


def test_extract_exact_block():
    doc = px.extract_solution(CORRECTION_XML)
    assert doc.routes == ((1, (1, 3, 7, 9, 9)), (2, (2, 4, 6, 8, 10, 11)))


def test_extract_tolerates_prose_and_fences():
    reply = ("Sure! Here is my solution:\n```xml\n" + CORRECTION_XML +
             "\n```\nHope that helps.")
    assert px.extract_solution(reply).to_solution().routes == \
        ((1, 3, 7, 9, 9), (2, 4, 6, 8, 10, 11))


def test_extract_accepts_bare_and_quoted_variants():
    reply = '<solution note=v2>\n<ROUTE id="3"> 4 5 6 </ROUTE>\n</solution>'
    assert px.extract_solution(reply).routes == ((3, (4, 5, 6)),)


def test_extract_numbers_routes_without_ids():
    reply = "<SOLUTION><route>[1]</route><route>[2]</route></SOLUTION>"
    assert px.extract_solution(reply).routes == ((1, (1,)), (2, (2,)))


def test_extract_requires_solution_tag():
    with pytest.raises(px.NoSolutionTag):
        px.extract_solution("no xml here")


def test_extract_rejects_non_integer_payload():
    with pytest.raises(px.UnparseableRoute):
        px.extract_solution("<SOLUTION><route id=1>[1,two,3]</route></SOLUTION>")


@settings(max_examples=200)
@given(candidates())
def test_solution_round_trip_through_xml(sol):
    inst = make_instance([(1, 1)], [1], name="rt-n2-k1")
    xml = px.instance_to_xml(inst, include_solution=sol)
    assert px.extract_solution(xml).to_solution() == sol


def test_doc_solution_conversions():
    sol = Solution(routes=((1, 2), (3,)))
    doc = px.XmlSolutionDoc.from_solution(sol)
    assert doc.routes == ((1, (1, 2)), (2, (3,)))
    assert doc.to_solution() == sol
