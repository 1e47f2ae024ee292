from __future__ import annotations

import json
import random

import pytest
from pydantic import ValidationError

from app.config import settings
from app.exceptions import AlreadyFallback, ConfigError, SplitFailed
from app.schemas.facets import FacetBundle, FacetLabel, FacetSchema, empty_facets
from app.schemas.generation import (
    ClassifierBackend,
    FacetStatus,
    FacetSummary,
    FallbackStage,
    GenerationConfig,
    Guidance,
    GuidanceKind,
    PromptFamily,
    SplitStrategy,
    Validation,
)
from app.services.entities import ConceptLexicon
from app.services.splitting import CueLexicon, SentenceClassifier, split_fs
from app.services.summarizer import AbstractGenerator, concatenate, lead300, regroup, validate
from conftest import build_article, random_article, scripted_client

FALLBACK_RULES = [
    ("Summarize this Intro section", json.dumps({"summary": "Intro summary.", "reasoning": "r"})),
    ("Summarize this Main Idea section", json.dumps({"summary": "Main idea summary.", "reasoning": "r"})),
    ("Summarize this Results & Conclusions section", json.dumps({"summary": "Findings summary.", "reasoning": "r"})),
]
REFINE_RULE = ("abstract draft:", json.dumps({"abstract": "Refined abstract.", "reasoning": "r"}))
GARBAGE = ("", "I cannot produce JSON today.")


def reply(text: str) -> str:
    return json.dumps({"summary": text, "reasoning": "because"})


@pytest.fixture(scope="module")
def cues() -> CueLexicon:
    return CueLexicon.load(settings.cue_lexicon_path)


def make_generator(rules: list[tuple[str, str]], cues: CueLexicon, **config) -> AbstractGenerator:
    options = {"splitting": SplitStrategy.FS, "prompt": PromptFamily.BC, "classifier": ClassifierBackend.RULE}
    options.update(config)
    generation_config = GenerationConfig(**options)
    return AbstractGenerator(
        generation_config,
        scripted_client(rules),
        classifier=SentenceClassifier(ClassifierBackend.RULE, cues),
    )


def sample_article():
    return build_article("d1", [
        "Diabetes is a major cause of death worldwide.",
        "The aim of this study was to test metformin.",
        "Patients were enrolled at two sites.",
        "We found lower glucose with metformin.",
        "In conclusion, metformin helps.",
    ], abstract="Metformin lowered glucose.")


# ========== Pure steps ==========

def test_validate() -> None:
    empty = [FacetSummary(facet=FacetLabel.BACKGROUND), FacetSummary(facet=FacetLabel.METHODS, summary="  \n")]
    assert validate(empty) is Validation.ALL_EMPTY
    assert validate(empty + [FacetSummary(facet=FacetLabel.RESULTS, summary="x")]) is Validation.SOME_CONTENT


def test_regroup() -> None:
    facets = empty_facets(FacetSchema.PRIMARY6)
    facets.update({
        FacetLabel.BACKGROUND: [0],
        FacetLabel.METHODS: [1],
        FacetLabel.OBJECTIVE: [2],
        FacetLabel.OTHERS: [3],
        FacetLabel.CONCLUSIONS: [4],
    })
    bundle = FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=facets, article_ref="d1")

    merged = regroup(bundle)

    assert merged.facet_schema is FacetSchema.FALLBACK3
    assert merged.facets == {
        FacetLabel.INTRO: [0, 2],
        FacetLabel.MAIN_IDEA: [1, 3],
        FacetLabel.RESULTS_CONCLUSIONS: [4],
    }
    with pytest.raises(AlreadyFallback):
        regroup(merged)


def test_regroup_empty_bundle() -> None:
    bundle = FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=empty_facets(FacetSchema.PRIMARY6), article_ref="d")
    assert all(indices == [] for indices in regroup(bundle).facets.values())


def test_lead300() -> None:
    assert lead300("x" * 500) == "x" * 300
    assert lead300("  " + "y" * 100) == "y" * 100
    assert lead300("") == ""


def test_concatenate_skips_empty() -> None:
    summaries = [
        FacetSummary(facet=FacetLabel.BACKGROUND, summary="A."),
        FacetSummary(facet=FacetLabel.OBJECTIVE, summary="", status=FacetStatus.EMPTY_FACET),
        FacetSummary(facet=FacetLabel.METHODS, summary="B."),
    ]
    assert concatenate(summaries) == "A. B."


# ========== Facets ==========

def test_summarize_facet_outcomes(cues: CueLexicon) -> None:
    generator = make_generator([("Summarize this Results section", reply("Lower glucose.")), GARBAGE], cues)

    empty = generator.summarize_facet("", FacetLabel.RESULTS)
    assert (empty.status, empty.summary) == (FacetStatus.EMPTY_FACET, "")

    ok = generator.summarize_facet("Glucose fell.", FacetLabel.RESULTS)
    assert (ok.status, ok.summary, ok.reasoning) == (FacetStatus.OK, "Lower glucose.", "because")

    calls = generator.client.calls
    failed = generator.summarize_facet("Glucose fell.", FacetLabel.METHODS)
    assert (failed.status, failed.summary) == (FacetStatus.PARSE_FAILED, "")
    # one retry on an unparseable reply
    assert generator.client.calls - calls == 2


def test_summarize_facet_transport_failure(cues: CueLexicon) -> None:
    generator = make_generator([], cues)
    assert generator.summarize_facet("text", FacetLabel.RESULTS).status is FacetStatus.LLM_FAILED


def test_summarize_facet_empty_reply(cues: CueLexicon) -> None:
    generator = make_generator([("", reply("   "))], cues)
    assert generator.summarize_facet("text", FacetLabel.RESULTS).status is FacetStatus.EMPTY_FACET


def test_summarize_all_canonical_order(cues: CueLexicon) -> None:
    rules = [(f"Summarize this {label.value} section", reply(label.value)) for label in FacetLabel]
    generator = make_generator(rules, cues)
    article = build_article("d1", [f"Paragraph {i}." for i in range(6)])
    facets = {label: [i] for i, label in enumerate(reversed(list(empty_facets(FacetSchema.PRIMARY6))))}
    bundle = FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=facets, article_ref="d1")

    summaries = generator.summarize_all(bundle, article)

    assert [s.facet for s in summaries] == list(bundle.order)
    assert [s.summary for s in summaries] == [label.value for label in bundle.order]
    assert len(generator.summarize_all(regroup(bundle), article)) == 3


def test_summarize_all_marks_empty_facets(cues: CueLexicon) -> None:
    generator = make_generator([("", reply("S"))], cues)
    article = build_article("d1", ["One.", "Two."])
    facets = empty_facets(FacetSchema.PRIMARY6)
    facets[FacetLabel.BACKGROUND] = [0]
    facets[FacetLabel.RESULTS] = [1]
    bundle = FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=facets, article_ref="d1")

    statuses = [s.status for s in generator.summarize_all(bundle, article)]
    assert statuses.count(FacetStatus.EMPTY_FACET) == 4
    assert statuses.count(FacetStatus.OK) == 2


# ========== Refinement ==========

def test_refine(cues: CueLexicon) -> None:
    assert make_generator([REFINE_RULE], cues).refine("Draft.") == "Refined abstract."


def test_refine_degrades_to_draft(cues: CueLexicon) -> None:
    warnings: list[str] = []
    assert make_generator([GARBAGE], cues).refine("Draft.", warnings) == "Draft."
    assert warnings == ["refinement reply unparseable"]


# ========== Full chain ==========

def test_generate_without_fallback(cues: CueLexicon) -> None:
    generator = make_generator([REFINE_RULE, ("Summarize this", reply("Facet summary."))], cues)
    record = generator.generate_abstract(sample_article())

    assert record.fallback_stage is FallbackStage.NOT_TRIGGERED
    assert record.bundle["schema"] == FacetSchema.PRIMARY6.value
    assert record.draft_abstract == " ".join(["Facet summary."] * 5)
    assert record.final_abstract == "Refined abstract."
    assert record.succeeded
    assert not record.refine_degraded


def test_garbage_primary_valid_fallback_regroups_every_article(cues: CueLexicon) -> None:
    generator = make_generator(FALLBACK_RULES + [REFINE_RULE, GARBAGE], cues)
    rng = random.Random(21)
    for n in range(20):
        record = generator.generate_abstract(random_article(rng, f"d{n}"))

        assert record.fallback_stage is FallbackStage.REGROUPED
        assert record.bundle["schema"] == FacetSchema.FALLBACK3.value
        assert len(record.discarded_summaries) == 6
        assert record.draft_abstract == " ".join(s.summary for s in record.facet_summaries if s.summary)
        assert record.final_abstract == "Refined abstract."


def test_always_garbage_falls_back_to_lead300(cues: CueLexicon) -> None:
    generator = make_generator([GARBAGE], cues)
    classifier = SentenceClassifier(ClassifierBackend.RULE, cues)
    rng = random.Random(8)
    for n in range(20):
        article = random_article(rng, f"d{n}")
        record = generator.generate_abstract(article)
        bundle = regroup(split_fs(article, classifier))

        assert record.fallback_stage is FallbackStage.LEAD300
        assert record.final_abstract.strip()
        assert record.refine_degraded
        for summary in record.facet_summaries:
            text = bundle.facet_text(article, summary.facet)
            if text.strip():
                assert summary.status is FacetStatus.LEAD_FALLBACK
                assert summary.summary == text.lstrip()[:300]
            else:
                assert summary.summary == ""


def test_failed_regrouped_facet_takes_lead(cues: CueLexicon) -> None:
    rules = [FALLBACK_RULES[0], REFINE_RULE, GARBAGE]
    generator = make_generator(rules, cues)
    article = sample_article()

    record = generator.generate_abstract(article)

    by_facet = {s.facet: s for s in record.facet_summaries}
    assert record.fallback_stage is FallbackStage.REGROUPED
    assert by_facet[FacetLabel.INTRO].status is FacetStatus.OK
    assert by_facet[FacetLabel.MAIN_IDEA].status is FacetStatus.LEAD_FALLBACK
    assert by_facet[FacetLabel.MAIN_IDEA].summary == "Patients were enrolled at two sites."


def test_blank_regrouped_reply_takes_lead(cues: CueLexicon) -> None:
    rules = [FALLBACK_RULES[0], ("Summarize this Main Idea section", reply("")), REFINE_RULE, GARBAGE]
    generator = make_generator(rules, cues)

    record = generator.generate_abstract(sample_article())

    by_facet = {s.facet: s for s in record.facet_summaries}
    assert record.fallback_stage is FallbackStage.REGROUPED
    assert by_facet[FacetLabel.MAIN_IDEA].status is FacetStatus.LEAD_FALLBACK
    assert by_facet[FacetLabel.MAIN_IDEA].summary == "Patients were enrolled at two sites."
    assert all(s.summary for s in record.facet_summaries)


def test_generation_is_deterministic(cues: CueLexicon) -> None:
    rules = FALLBACK_RULES + [REFINE_RULE, GARBAGE]
    article = random_article(random.Random(2), "d0")
    first = make_generator(rules, cues).generate_abstract(article)
    second = make_generator(rules, cues).generate_abstract(article)
    assert first.to_jsonl() == second.to_jsonl()


def test_entity_guided_prompt(cues: CueLexicon) -> None:
    lexicon = ConceptLexicon.load(settings.lexicon_path)
    generator = make_generator(
        [("Paragraph text:Fever\n", reply("Fever summary.")), REFINE_RULE, GARBAGE],
        cues,
        guidance=Guidance(kind=GuidanceKind.TRUMLS, top_n=3),
        lexicon=lexicon,
    )
    summary = generator.summarize_facet("Fever.", FacetLabel.RESULTS)
    assert (summary.status, summary.summary) == (FacetStatus.OK, "Fever summary.")


def test_chain_of_thought_two_calls(cues: CueLexicon) -> None:
    generator = make_generator(
        [
            ("TASK 1: ELEMENT EXTRACTION", "Entities: metformin."),
            ("TASK 2: SUMMARY GENERATION", reply("CoT summary.")),
        ],
        cues,
        prompt=PromptFamily.SI,
        guidance=Guidance(kind=GuidanceKind.COT),
    )
    summary = generator.summarize_facet("Metformin lowered glucose.", FacetLabel.RESULTS)

    assert summary.summary == "CoT summary."
    assert generator.client.calls == 2


def test_split_failure_without_rule_fallback(cues: CueLexicon) -> None:
    config = GenerationConfig(allow_rule_fallback=False)
    client = scripted_client([])
    generator = AbstractGenerator(
        config,
        client,
        classifier=SentenceClassifier(ClassifierBackend.LLM, cues, client=client, allow_rule_fallback=False),
    )
    with pytest.raises(SplitFailed):
        generator.generate_abstract(sample_article())


def test_naive_split_uses_generic_prompt(cues: CueLexicon) -> None:
    generator = make_generator(
        [("Summarize this section.", reply("Block.")), REFINE_RULE, GARBAGE],
        cues,
        splitting=SplitStrategy.NS,
    )
    record = generator.generate_abstract(sample_article())

    assert record.fallback_stage is FallbackStage.NOT_TRIGGERED
    assert record.draft_abstract == " ".join(["Block."] * 5)


def test_config_pairing_rules() -> None:
    lexicon = ConceptLexicon.load(settings.lexicon_path)
    with pytest.raises(ConfigError):
        GenerationConfig(prompt=PromptFamily.BC, guidance=Guidance(kind=GuidanceKind.COT))
    with pytest.raises(ConfigError):
        GenerationConfig(prompt=PromptFamily.DI, guidance=Guidance(kind=GuidanceKind.TRUMLS, top_n=5))
    # the naive split has a prompt for bc only
    with pytest.raises(ConfigError):
        GenerationConfig(splitting=SplitStrategy.NS, prompt=PromptFamily.DI)
    with pytest.raises(ConfigError):
        GenerationConfig(
            splitting=SplitStrategy.NS,
            guidance=Guidance(kind=GuidanceKind.TRUMLS, top_n=5),
            lexicon=lexicon,
        )

    config = GenerationConfig(prompt=PromptFamily.DI, guidance=Guidance(kind=GuidanceKind.TRUMLS, top_n=5), lexicon=lexicon)
    assert config.lexicon is lexicon


def test_config_rejects_non_lexicon() -> None:
    with pytest.raises(ValidationError):
        GenerationConfig(lexicon={"aspirin": "C0004057"})
