"""Pydantic schemas for evaluation metrics and significance tests."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from pydantic import BaseModel, Field, model_validator


# ========== Metric Schemas ==========

@dataclass(frozen=True)
class Fragment:
    summary_start: int
    source_start: int
    length: int


@dataclass
class FragmentSet:
    """Extractive fragments, non-overlapping in the summary and ordered by summary_start."""

    fragments: list[Fragment] = field(default_factory=list)
    summary_len: int = 0
    source_len: int = 0

    @property
    def lengths(self) -> list[int]:
        return [f.length for f in self.fragments]


# column name -> results-table header
METRIC_COLUMNS = {
    "bigram_novelty": "Bi-g",
    "trigram_novelty": "Tri-g",
    "density": "Dens.",
    "coverage": "Cov.",
    "compression": "Comp.",
    "rouge_l": "R-L",
    "umls_recall": "U-R",
}

# metrics compared by distance to the human reference when a reference report is given
PROXIMITY_METRICS = ("bigram_novelty", "trigram_novelty", "density", "coverage", "compression")


class MetricReport(BaseModel):
    doc_id: str
    bigram_novelty: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    trigram_novelty: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    coverage: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    density: Optional[float] = Field(default=None, ge=0.0)
    compression: Optional[float] = Field(default=None, gt=0.0)
    rouge_l: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    umls_recall: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    external: dict[str, float] = {}

    def to_row(self) -> dict:
        row = self.model_dump(exclude={"external"})
        row.update(self.external)
        return row


# ========== Bootstrap Schemas ==========

class BootstrapMode(str, Enum):
    RAW = "Raw"
    PROXIMITY = "Proximity"


class PairedScores(BaseModel):
    doc_ids: list[str]
    a: list[float]
    b: list[float]
    ref: Optional[list[float]] = None

    @model_validator(mode="after")
    def lengths_match(self) -> "PairedScores":
        n = len(self.doc_ids)
        if len(self.a) != n or len(self.b) != n or (self.ref is not None and len(self.ref) != n):
            raise ValueError("paired score lists must have equal lengths")
        if len(set(self.doc_ids)) != n:
            raise ValueError("doc_ids must be unique")
        return self

    def __len__(self) -> int:
        return len(self.doc_ids)


class BootstrapResult(BaseModel):
    metric: str = ""
    mean_diff: float
    p_value: float = Field(ge=0.0, le=1.0)
    stars: str
    iters: int
    seed: int
    mode: BootstrapMode
    n: int
