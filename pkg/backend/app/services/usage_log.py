"""Persist LLM requests to the usage log and summarize them."""

import logging
from typing import Optional

from sqlalchemy import case, func
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.orm import sessionmaker

from app.database import init_usage_db
from app.models.llm_usage import LlmUsageLog
from app.schemas.llm import ChatMessages

logger = logging.getLogger(__name__)


def format_prompt(messages: ChatMessages) -> str:
    return "\n\n".join(f"[{m.role.capitalize()}]\n{m.content}" for m in messages)


class UsageRecorder:
    """Thread-safe: every record uses its own session."""

    def __init__(self, session_factory: sessionmaker):
        self.session_factory = session_factory

    @classmethod
    def from_url(cls, database_url: str) -> "UsageRecorder":
        return cls(init_usage_db(database_url))

    def record(
        self,
        request_type: str,
        model_name: str,
        request_hash: str,
        messages: ChatMessages,
        response_text: str,
        processing_time_ms: int,
        success: bool,
        error_message: Optional[str] = None,
        doc_id: Optional[str] = None,
        batch_id: Optional[str] = None,
    ) -> None:
        usage_log = LlmUsageLog(
            request_type=request_type,
            model_name=model_name,
            request_hash=request_hash,
            prompt_text=format_prompt(messages),
            response_text=response_text,
            processing_time_ms=processing_time_ms,
            success=1 if success else 0,
            error_message=error_message,
            doc_id=doc_id,
            batch_id=batch_id,
        )
        db = self.session_factory()
        try:
            db.add(usage_log)
            db.commit()
        except SQLAlchemyError as e:
            db.rollback()
            # usage log failures never abort a run
            logger.warning(f"Failed to write usage log: {e}")
        finally:
            db.close()

    def stats(self, batch_id: Optional[str] = None) -> dict:
        """Request counts overall and per request type."""
        db = self.session_factory()
        try:
            query = db.query(
                func.count(LlmUsageLog.id).label("total_requests"),
                func.sum(case((LlmUsageLog.success == 1, 1), else_=0)).label("successful_requests"),
                func.avg(LlmUsageLog.processing_time_ms).label("avg_processing_time"),
            )
            by_type = db.query(LlmUsageLog.request_type, func.count(LlmUsageLog.id).label("requests"))
            if batch_id:
                query = query.filter(LlmUsageLog.batch_id == batch_id)
                by_type = by_type.filter(LlmUsageLog.batch_id == batch_id)
            totals = query.first()
            return {
                "total_requests": totals.total_requests or 0,
                "successful_requests": totals.successful_requests or 0,
                "avg_processing_time_ms": round(totals.avg_processing_time or 0, 2),
                "by_type": {row.request_type: row.requests for row in by_type.group_by(LlmUsageLog.request_type).all()},
            }
        finally:
            db.close()
