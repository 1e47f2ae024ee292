"""Pydantic schemas for prompts, chat messages and the LLM transport."""

from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, Field


# ========== Prompt Schemas ==========

class PromptStrategy(str, Enum):
    BC = "bc"
    DI = "di"
    SI = "si"
    BC_NS = "bc_ns"
    BC_TRUMLS = "bc_trumls"
    DI_TRUMLS = "di_trumls"
    SI_COT_STAGE1 = "si_cot_stage1"
    SI_COT_STAGE2 = "si_cot_stage2"
    REFINE = "refine"
    CLASSIFY = "classify"


class GuidelineVariant(str, Enum):
    CONCISE = "concise"
    DETAILED = "detailed"


class ChatMessage(BaseModel):
    role: Literal["system", "user", "assistant"]
    content: str


ChatMessages = list[ChatMessage]


class LlmJsonReply(BaseModel):
    """Parsed JSON reply; `summary` holds the primary key's value ("abstract" for refinement)."""

    summary: str
    reasoning: str
    raw: str


# ========== Transport Schemas ==========

class LlmBackendKind(str, Enum):
    HTTP = "http"
    REPLAY = "replay"
    SCRIPTED = "scripted"
    RECORD = "record"


class ScriptRule(BaseModel):
    """Canned reply; matches by request hash or by substring of the last user message."""

    match: str = ""
    request_hash: Optional[str] = None
    reply: str


class LlmConfig(BaseModel):
    endpoint_url: str = "http://localhost:11434/api/chat"
    model_name: str = "llama3.2:3b"
    temperature: float = Field(default=0.0, ge=0.0)
    max_retries: int = Field(default=2, ge=0)
    timeout: float = Field(default=120.0, gt=0.0)
    backend: LlmBackendKind = LlmBackendKind.HTTP
    cassette_path: Optional[Path] = None
    script: list[ScriptRule] = Field(default_factory=list)
    backoff_base: float = Field(default=1.0, ge=0.0)
    backoff_factor: float = Field(default=2.0, ge=1.0)
    max_in_flight: int = Field(default=6, ge=1)
    seed: Optional[int] = None


class CassetteRecord(BaseModel):
    request_hash: str
    request_body: dict
    response_body: dict
    timestamp: datetime
