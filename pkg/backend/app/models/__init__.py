"""ORM models for FacetForge."""

from app.models.llm_usage import LlmUsageLog

__all__ = ["LlmUsageLog"]
