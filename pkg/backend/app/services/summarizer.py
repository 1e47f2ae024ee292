"""Facet-wise abstract generation: parallel facet summaries, fallback chain and refinement."""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

from app.exceptions import AlreadyFallback, FacetForgeError, LlmTransportError, LlmUnavailable, SplitFailed, UnparseableReply
from app.schemas.corpus import Article
from app.schemas.facets import FacetBundle, FacetLabel, FacetSchema
from app.schemas.generation import (
    FacetStatus,
    FacetSummary,
    FallbackStage,
    GenerationConfig,
    GenerationRecord,
    GuidanceKind,
    PromptFamily,
    SplitStrategy,
    Validation,
)
from app.schemas.llm import ChatMessages, LlmJsonReply, PromptStrategy
from app.services.entities import facet_entities
from app.services.llm_client import LlmClient
from app.services.prompts import parse_llm_json, render, render_refine
from app.services.splitting import HeaderMap, SentenceClassifier, split_fs, split_ns, split_sh

logger = logging.getLogger(__name__)

LEAD_CHARS = 300

# fallback facet -> primary facets merged into it
REGROUPING = {
    FacetLabel.INTRO: (FacetLabel.BACKGROUND, FacetLabel.OBJECTIVE),
    FacetLabel.MAIN_IDEA: (FacetLabel.METHODS, FacetLabel.OTHERS),
    FacetLabel.RESULTS_CONCLUSIONS: (FacetLabel.RESULTS, FacetLabel.CONCLUSIONS),
}

_FAMILY_STRATEGY = {
    PromptFamily.BC: PromptStrategy.BC,
    PromptFamily.DI: PromptStrategy.DI,
    PromptFamily.SI: PromptStrategy.SI,
}
_TRUMLS_STRATEGY = {
    PromptFamily.BC: PromptStrategy.BC_TRUMLS,
    PromptFamily.DI: PromptStrategy.DI_TRUMLS,
}


# ========== Pure steps ==========

def validate(summaries: list[FacetSummary]) -> Validation:
    if all(not s.summary.strip() for s in summaries):
        return Validation.ALL_EMPTY
    return Validation.SOME_CONTENT


def regroup(bundle: FacetBundle) -> FacetBundle:
    """Merge the six primary facets into Intro / Main Idea / Results & Conclusions."""
    if bundle.facet_schema is FacetSchema.FALLBACK3:
        raise AlreadyFallback(f"{bundle.article_ref}: bundle is already regrouped")
    facets = {
        merged: sorted(i for part in parts for i in bundle.facets[part])
        for merged, parts in REGROUPING.items()
    }
    return FacetBundle(facet_schema=FacetSchema.FALLBACK3, facets=facets, article_ref=bundle.article_ref)


def lead300(text: str) -> str:
    return text.lstrip()[:LEAD_CHARS]


def concatenate(summaries: list[FacetSummary]) -> str:
    """Draft abstract: non-empty summaries in facet order joined by single spaces."""
    return " ".join(s.summary for s in summaries if s.summary.strip())


# ========== Generator ==========

class AbstractGenerator:
    """Runs the generation chain for one configuration against a shared LLM client."""

    def __init__(
        self,
        config: GenerationConfig,
        client: LlmClient,
        classifier: Optional[SentenceClassifier] = None,
        header_map: Optional[HeaderMap] = None,
        textrank_params: Optional[dict] = None,
    ):
        self.config = config
        self.client = client
        self.classifier = classifier
        self.header_map = header_map
        self.textrank_params = textrank_params or {}
        self.fingerprint = config.fingerprint()

    def _strategy(self, bundle_schema: FacetSchema) -> PromptStrategy:
        if self.config.splitting is SplitStrategy.NS and bundle_schema is FacetSchema.PRIMARY6:
            return PromptStrategy.BC_NS
        if self.config.guidance.kind is GuidanceKind.TRUMLS:
            return _TRUMLS_STRATEGY[self.config.prompt]
        return _FAMILY_STRATEGY[self.config.prompt]

    def _ask(self, messages: ChatMessages, key: str, request_type: str, doc_id: Optional[str]) -> LlmJsonReply:
        """Chat and parse, re-asking on unparseable replies up to facet_parse_retries times."""
        attempts = self.config.facet_parse_retries + 1
        for attempt in range(attempts):
            raw = self.client.chat(messages, request_type=request_type, doc_id=doc_id)
            try:
                return parse_llm_json(raw, key=key)
            except UnparseableReply:
                if attempt + 1 == attempts:
                    raise
                logger.warning(f"[{doc_id}] unparseable {request_type} reply, retrying")
        raise AssertionError("unreachable")

    # ========== Facets ==========

    def summarize_facet(
        self,
        facet_text: str,
        facet: FacetLabel,
        bundle_schema: FacetSchema = FacetSchema.PRIMARY6,
        doc_id: Optional[str] = None,
    ) -> FacetSummary:
        """Summarize one facet; every failure ends up in the returned status."""
        if not facet_text.strip():
            return FacetSummary(facet=facet, status=FacetStatus.EMPTY_FACET)

        try:
            if self.config.guidance.kind is GuidanceKind.COT:
                stage1 = self.client.chat(
                    render(PromptStrategy.SI_COT_STAGE1, facet, facet_text),
                    request_type="cot_stage1",
                    doc_id=doc_id,
                )
                messages = render(PromptStrategy.SI_COT_STAGE2, facet, facet_text, stage1_reply=stage1)
                request_type = "cot_stage2"
            else:
                strategy = self._strategy(bundle_schema)
                entities = None
                if strategy in _TRUMLS_STRATEGY.values():
                    entities = facet_entities(
                        facet_text, self.config.lexicon, self.config.guidance.top_n, **self.textrank_params
                    )
                messages = render(strategy, facet, facet_text, entities=entities)
                request_type = "facet_summary"
            reply = self._ask(messages, "summary", request_type, doc_id)
        except LlmTransportError as e:
            logger.warning(f"[{doc_id}] {facet.value}: LLM call failed: {e}")
            return FacetSummary(facet=facet, status=FacetStatus.LLM_FAILED)
        except UnparseableReply:
            logger.warning(f"[{doc_id}] {facet.value}: reply still unparseable after retries")
            return FacetSummary(facet=facet, status=FacetStatus.PARSE_FAILED)

        if not reply.summary.strip():
            return FacetSummary(facet=facet, reasoning=reply.reasoning, status=FacetStatus.EMPTY_FACET)
        return FacetSummary(facet=facet, summary=reply.summary, reasoning=reply.reasoning, status=FacetStatus.OK)

    def summarize_all(self, bundle: FacetBundle, article: Article) -> list[FacetSummary]:
        """One summary per facet, dispatched concurrently, returned in canonical facet order."""
        if bundle.article_ref != article.doc_id:
            raise ValueError(f"bundle of {bundle.article_ref} used with article {article.doc_id}")
        order = bundle.order
        with ThreadPoolExecutor(max_workers=len(order)) as executor:
            futures = {
                label: executor.submit(
                    self.summarize_facet,
                    bundle.facet_text(article, label),
                    label,
                    bundle.facet_schema,
                    article.doc_id,
                )
                for label in order
            }
            return [futures[label].result() for label in order]

    # ========== Refinement ==========

    def refine(self, draft: str, warnings: Optional[list[str]] = None, doc_id: Optional[str] = None) -> str:
        """Refined abstract, or the draft itself when the refinement reply is unusable."""
        messages = render_refine(draft)
        try:
            reply = self._ask(messages, "abstract", "refine", doc_id)
            if reply.summary.strip():
                return reply.summary
            problem = "refinement returned an empty abstract"
        except LlmTransportError as e:
            problem = f"refinement call failed: {e}"
        except UnparseableReply:
            problem = "refinement reply unparseable"
        logger.warning(f"[{doc_id}] {problem}; keeping the draft")
        if warnings is not None:
            warnings.append(problem)
        return draft

    # ========== Full chain ==========

    def split(self, article: Article) -> FacetBundle:
        strategy = self.config.splitting
        if strategy is SplitStrategy.NS:
            return split_ns(article)
        if strategy is SplitStrategy.SH:
            return split_sh(article, self.header_map)
        if self.classifier is None:
            raise ValueError("first-sentence splitting needs a sentence classifier")
        try:
            return split_fs(article, self.classifier)
        except LlmUnavailable as e:
            raise SplitFailed(f"{article.doc_id}: {e}") from e

    def generate_abstract(self, article: Article) -> GenerationRecord:
        """split -> summarize -> validate -> [regroup -> summarize -> validate -> Lead-300] -> refine."""
        timings: dict[str, float] = {}
        warnings: list[str] = []
        start = time.perf_counter()

        bundle = self.split(article)
        timings["split"] = time.perf_counter() - start

        summaries = self.summarize_all(bundle, article)
        discarded: list[FacetSummary] = []
        stage = FallbackStage.NOT_TRIGGERED
        used_bundle = bundle

        if validate(summaries) is Validation.ALL_EMPTY:
            logger.info(f"[{article.doc_id}] all facet summaries empty, regrouping into three facets")
            discarded = summaries
            used_bundle = regroup(bundle)
            summaries = self.summarize_all(used_bundle, article)
            stage = FallbackStage.REGROUPED
            if validate(summaries) is Validation.ALL_EMPTY:
                logger.info(f"[{article.doc_id}] regrouped summaries empty, using Lead-300")
                stage = FallbackStage.LEAD300
            summaries = [self._lead_if_blank(s, used_bundle, article) for s in summaries]
        timings["summarize"] = time.perf_counter() - start - timings["split"]

        draft = concatenate(summaries)
        final = self.refine(draft, warnings, doc_id=article.doc_id) if draft.strip() else draft
        timings["total"] = time.perf_counter() - start

        return GenerationRecord(
            doc_id=article.doc_id,
            config_fingerprint=self.fingerprint,
            config=self.config.describe(),
            bundle=used_bundle.to_dict(),
            facet_summaries=summaries,
            discarded_summaries=discarded,
            draft_abstract=draft,
            final_abstract=final,
            fallback_stage=stage,
            refine_degraded=bool(warnings),
            warnings=warnings,
            timings=timings,
        )

    @staticmethod
    def _lead_if_blank(summary: FacetSummary, bundle: FacetBundle, article: Article) -> FacetSummary:
        """Regrouped facets left without a summary take the first characters of their text.

        Covers empty replies as well as parse and transport failures; only facets
        with no source text stay empty.
        """
        if summary.summary.strip():
            return summary
        text = bundle.facet_text(article, summary.facet)
        if not text.strip():
            return summary
        return FacetSummary(facet=summary.facet, summary=lead300(text), status=FacetStatus.LEAD_FALLBACK)


def failed_record(article: Article, generator: AbstractGenerator, error: FacetForgeError) -> GenerationRecord:
    """Record for an article whose chain could not run."""
    return GenerationRecord(
        doc_id=article.doc_id,
        config_fingerprint=generator.fingerprint,
        config=generator.config.describe(),
        error=f"{type(error).__name__}: {error}",
    )
