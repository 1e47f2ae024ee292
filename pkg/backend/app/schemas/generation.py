"""Pydantic schemas for abstract generation: configuration, facet summaries and records."""

import hashlib
import json
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.exceptions import ConfigError
from app.schemas.entities import ConceptLookup
from app.schemas.facets import FacetLabel
from app.schemas.llm import LlmConfig


class SplitStrategy(str, Enum):
    FS = "fs"
    NS = "ns"
    SH = "sh"


class PromptFamily(str, Enum):
    BC = "bc"
    DI = "di"
    SI = "si"


class GuidanceKind(str, Enum):
    NONE = "none"
    TRUMLS = "trumls"
    COT = "cot"


class ClassifierBackend(str, Enum):
    LLM = "llm"
    RULE = "rule"


class Guidance(BaseModel):
    kind: GuidanceKind = GuidanceKind.NONE
    top_n: int = 0

    @classmethod
    def parse(cls, value: str) -> "Guidance":
        """Parse `none`, `cot` or `trumls:N`."""
        kind, _, n = value.strip().lower().partition(":")
        if kind == GuidanceKind.TRUMLS.value:
            if not n.isdigit() or int(n) < 1:
                raise ConfigError(f"trumls guidance needs a positive entity count, got {value!r}")
            return cls(kind=GuidanceKind.TRUMLS, top_n=int(n))
        if n or kind not in (GuidanceKind.NONE.value, GuidanceKind.COT.value):
            raise ConfigError(f"unknown guidance {value!r}")
        return cls(kind=GuidanceKind(kind))

    def label(self) -> str:
        return f"trumls:{self.top_n}" if self.kind is GuidanceKind.TRUMLS else self.kind.value


class GenerationConfig(BaseModel):
    """One pipeline configuration. Pairing rules are checked on construction."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    splitting: SplitStrategy = SplitStrategy.FS
    prompt: PromptFamily = PromptFamily.BC
    guidance: Guidance = Field(default_factory=Guidance)
    llm: LlmConfig = Field(default_factory=LlmConfig)
    lexicon: Optional[ConceptLookup] = Field(default=None, exclude=True)
    classifier: ClassifierBackend = ClassifierBackend.LLM
    allow_rule_fallback: bool = True
    facet_parse_retries: int = Field(default=1, ge=0)

    @model_validator(mode="after")
    def check_pairing(self) -> "GenerationConfig":
        kind = self.guidance.kind
        if kind is GuidanceKind.COT and self.prompt is not PromptFamily.SI:
            raise ConfigError("cot guidance pairs with the si prompt only")
        if kind is GuidanceKind.TRUMLS:
            if self.prompt not in (PromptFamily.BC, PromptFamily.DI):
                raise ConfigError("trumls guidance pairs with the bc or di prompt only")
            if self.lexicon is None:
                raise ConfigError("trumls guidance requires a concept lexicon")
        if self.splitting is SplitStrategy.NS and (
            self.prompt is not PromptFamily.BC or kind is not GuidanceKind.NONE
        ):
            raise ConfigError("ns splitting is only defined for the bc prompt without guidance")
        return self

    def fingerprint(self) -> str:
        """Stable digest of everything that can change generated text."""
        payload = {
            "splitting": self.splitting.value,
            "prompt": self.prompt.value,
            "guidance": self.guidance.label(),
            "model": self.llm.model_name,
            "temperature": self.llm.temperature,
            "classifier": self.classifier.value,
            "allow_rule_fallback": self.allow_rule_fallback,
            "facet_parse_retries": self.facet_parse_retries,
            "lexicon": self.lexicon.digest if self.lexicon is not None else None,
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def describe(self) -> dict:
        return {
            "splitting": self.splitting.value,
            "prompt": self.prompt.value,
            "guidance": self.guidance.label(),
            "model": self.llm.model_name,
            "temperature": self.llm.temperature,
        }


# ========== Result Schemas ==========

class FacetStatus(str, Enum):
    OK = "Ok"
    EMPTY_FACET = "EmptyFacet"
    PARSE_FAILED = "ParseFailed"
    LLM_FAILED = "LlmFailed"
    LEAD_FALLBACK = "LeadFallback"


class FallbackStage(str, Enum):
    NOT_TRIGGERED = "NotTriggered"
    REGROUPED = "Regrouped"
    LEAD300 = "Lead300"


class Validation(str, Enum):
    ALL_EMPTY = "AllEmpty"
    SOME_CONTENT = "SomeContent"


class FacetSummary(BaseModel):
    facet: FacetLabel
    summary: str = ""
    reasoning: str = ""
    status: FacetStatus = FacetStatus.OK


class GenerationRecord(BaseModel):
    """Per-article trace of one generation run."""

    doc_id: str
    config_fingerprint: str
    config: dict
    bundle: dict = {}
    facet_summaries: list[FacetSummary] = []
    discarded_summaries: list[FacetSummary] = []
    draft_abstract: str = ""
    final_abstract: str = ""
    fallback_stage: FallbackStage = FallbackStage.NOT_TRIGGERED
    refine_degraded: bool = False
    warnings: list[str] = []
    error: Optional[str] = None
    timings: dict[str, float] = {}

    @property
    def succeeded(self) -> bool:
        return self.error is None and bool(self.final_abstract.strip())

    def to_jsonl(self, include_timings: bool = False) -> str:
        exclude = None if include_timings else {"timings"}
        return json.dumps(self.model_dump(mode="json", exclude=exclude), ensure_ascii=False)
