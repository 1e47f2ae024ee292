from __future__ import annotations

import pytest

from app.exceptions import EmptyDraft, MissingEntities, MissingStage1, UnparseableReply
from app.schemas.facets import FacetLabel
from app.schemas.llm import ChatMessages, GuidelineVariant, PromptStrategy
from app.services.prompts import fill, load_guidelines, parse_llm_json, render, render_refine
from conftest import FIXTURES

GOLDEN = FIXTURES / "golden"


def serialize(messages: ChatMessages) -> str:
    return "\n".join(f"[{m.role}]\n{m.content}" for m in messages) + "\n"


def golden(name: str) -> str:
    return (GOLDEN / f"{name}.txt").read_text(encoding="utf-8")


# ========== Rendering ==========

@pytest.mark.parametrize(
    "strategy",
    [
        PromptStrategy.BC,
        PromptStrategy.DI,
        PromptStrategy.SI,
        PromptStrategy.BC_NS,
        PromptStrategy.SI_COT_STAGE1,
    ],
)
def test_render_matches_golden(strategy: PromptStrategy) -> None:
    messages = render(strategy, FacetLabel.RESULTS, "FACET TEXT")
    assert serialize(messages) == golden(strategy.value)


@pytest.mark.parametrize("strategy", [PromptStrategy.BC_TRUMLS, PromptStrategy.DI_TRUMLS])
def test_render_entity_prompts_match_golden(strategy: PromptStrategy) -> None:
    messages = render(strategy, FacetLabel.RESULTS, "FACET TEXT", entities=["aspirin", "fever"])
    assert serialize(messages) == golden(strategy.value)


def test_render_cot_stage2_matches_golden() -> None:
    messages = render(PromptStrategy.SI_COT_STAGE2, FacetLabel.RESULTS, "FACET TEXT", stage1_reply="STAGE ONE REPLY")

    assert [m.role for m in messages] == ["system", "user", "assistant", "user"]
    assert serialize(messages) == golden("si_cot_stage2")


def test_render_refine_matches_golden() -> None:
    assert serialize(render_refine("DRAFT ABSTRACT")) == golden("refine")


def test_guideline_literals() -> None:
    concise = load_guidelines(GuidelineVariant.CONCISE)
    assert concise.guide(FacetLabel.RESULTS) == "Prioritize key findings and data."
    assert concise.guide(FacetLabel.RESULTS_CONCLUSIONS) == "Focus on key findings and their implications."
    detailed = load_guidelines(GuidelineVariant.DETAILED)
    assert detailed.guide(FacetLabel.RESULTS).startswith("Present key findings, including relevant statistics")


def test_fallback_facets_use_display_names() -> None:
    messages = render(PromptStrategy.BC, FacetLabel.MAIN_IDEA, "text")
    assert "Summarize this Main Idea section" in messages[1].content
    assert "Focus on the central concept or hypothesis." in messages[1].content


def test_fill_does_not_rescan_substituted_text() -> None:
    text = fill("<facet_text> / <facet_type>", {"facet_text": "<facet_type>", "facet_type": "Methods"})
    assert text == "<facet_type> / Methods"


def test_render_preconditions() -> None:
    with pytest.raises(ValueError):
        render(PromptStrategy.BC, FacetLabel.RESULTS, "  ")
    with pytest.raises(MissingEntities):
        render(PromptStrategy.DI_TRUMLS, FacetLabel.RESULTS, "text")
    with pytest.raises(MissingStage1):
        render(PromptStrategy.SI_COT_STAGE2, FacetLabel.RESULTS, "text")
    with pytest.raises(EmptyDraft):
        render_refine("")


# ========== Reply parsing ==========

def test_parse_plain_json() -> None:
    reply = parse_llm_json('{"summary": " S. ", "reasoning": "r"}')
    assert (reply.summary, reply.reasoning) == ("S.", "r")


def test_parse_fenced_json() -> None:
    raw = 'Here you go:\n```json\n{"reasoning": "r", "summary": "S"}\n```'
    assert parse_llm_json(raw).summary == "S"


def test_parse_embedded_object_with_braces_in_strings() -> None:
    raw = 'Sure! {"note": 1} then {"summary": "uses {braces} and \\"quotes\\"", "reasoning": "x"} bye'
    assert parse_llm_json(raw).summary == 'uses {braces} and "quotes"'


def test_parse_refine_key_and_missing_reasoning() -> None:
    reply = parse_llm_json('{"abstract": "A"}', key="abstract")
    assert (reply.summary, reply.reasoning) == ("A", "")


def test_parse_non_string_reasoning_is_serialized() -> None:
    reply = parse_llm_json('{"summary": "S", "reasoning": ["a", "b"]}')
    assert reply.reasoning == '["a", "b"]'


@pytest.mark.parametrize("raw", ["garbage", '{"summary": 3}', '{"text": "no key"}', "```\nnot json\n```", ""])
def test_parse_unparseable(raw: str) -> None:
    with pytest.raises(UnparseableReply):
        parse_llm_json(raw)
