"""Progress and run manifest schemas."""

from datetime import datetime

from pydantic import BaseModel, Field, model_validator


class Progress(BaseModel):
    """Progress snapshot written after each article for external polling."""

    is_running: bool
    mode: str = ""
    current: int = 0
    total: int = 0
    current_doc: str = ""
    started_at: datetime | None = None
    updated_at: datetime | None = None


class RunManifest(BaseModel):
    config_fingerprint: str
    config: dict = {}
    input_path: str
    output_paths: list[str] = []
    processed: int = Field(default=0, ge=0)
    succeeded: int = Field(default=0, ge=0)
    failed: int = Field(default=0, ge=0)
    fallback_regrouped: int = Field(default=0, ge=0)
    fallback_lead300: int = Field(default=0, ge=0)
    refine_degraded: int = Field(default=0, ge=0)
    facet_status_counts: dict[str, int] = {}
    llm_calls: int = Field(default=0, ge=0)
    started_at: datetime | None = None
    wall_time_s: float = 0.0

    @model_validator(mode="after")
    def counts_consistent(self) -> "RunManifest":
        if self.processed != self.succeeded + self.failed:
            raise ValueError("processed must equal succeeded + failed")
        return self
