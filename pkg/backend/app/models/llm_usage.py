"""LLM usage log model."""

from datetime import datetime

from sqlalchemy import DateTime, Index, Integer, String, Text
from sqlalchemy.orm import Mapped, mapped_column

from app.database import Base


class LlmUsageLog(Base):
    """One chat request: what was sent, what came back, how long it took."""

    __tablename__ = "llm_usage_logs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)

    # Request details
    request_type: Mapped[str] = mapped_column(
        String(50), nullable=False
    )  # facet_summary, cot_stage1, cot_stage2, refine, classify
    model_name: Mapped[str] = mapped_column(String(100), nullable=False)
    request_hash: Mapped[str] = mapped_column(String(64), nullable=False)

    # The actual prompt sent (for debugging/prompt audits)
    prompt_text: Mapped[str | None] = mapped_column(Text)
    response_text: Mapped[str | None] = mapped_column(Text)

    # Processing info
    processing_time_ms: Mapped[int] = mapped_column(Integer, default=0)
    success: Mapped[int] = mapped_column(Integer, default=1)  # 1=success, 0=failed
    error_message: Mapped[str | None] = mapped_column(Text)

    # Related entities
    doc_id: Mapped[str | None] = mapped_column(String(100))
    batch_id: Mapped[str | None] = mapped_column(String(50))  # one generate run

    created_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow)

    __table_args__ = (
        Index("idx_llm_usage_type", "request_type"),
        Index("idx_llm_usage_doc", "doc_id"),
        Index("idx_llm_usage_batch", "batch_id"),
        Index("idx_llm_usage_date", "created_at"),
    )
