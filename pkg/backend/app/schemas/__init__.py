"""Pydantic schemas for FacetForge."""

from app.schemas.corpus import Article, DatasetSplit, Paragraph, TokenStats
from app.schemas.entities import LinkedConcept, LinkedConceptSet, ScoredPhrase
from app.schemas.facets import FacetBundle, FacetLabel, FacetSchema
from app.schemas.generation import (
    FacetStatus,
    FacetSummary,
    FallbackStage,
    GenerationConfig,
    GenerationRecord,
    Guidance,
)
from app.schemas.llm import ChatMessage, LlmConfig, LlmJsonReply, PromptStrategy
from app.schemas.metrics import BootstrapResult, FragmentSet, MetricReport, PairedScores
from app.schemas.progress import Progress, RunManifest

__all__ = [
    "Article",
    "Paragraph",
    "DatasetSplit",
    "TokenStats",
    "FacetLabel",
    "FacetSchema",
    "FacetBundle",
    "PromptStrategy",
    "ChatMessage",
    "LlmJsonReply",
    "LlmConfig",
    "ScoredPhrase",
    "LinkedConcept",
    "LinkedConceptSet",
    "Guidance",
    "GenerationConfig",
    "FacetStatus",
    "FacetSummary",
    "FallbackStage",
    "GenerationRecord",
    "FragmentSet",
    "MetricReport",
    "PairedScores",
    "BootstrapResult",
    "Progress",
    "RunManifest",
]
