"""Pydantic schemas for ingested articles, dataset splits and corpus statistics."""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ========== Article Schemas ==========

class Paragraph(BaseModel):
    index: int = Field(ge=0)
    text: str
    section_header: Optional[str] = None

    @field_validator("text")
    @classmethod
    def text_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("paragraph text is blank")
        return value


class Article(BaseModel):
    """Parsed full text: body paragraphs in document order plus the reference abstract."""

    doc_id: str = Field(min_length=1)
    paragraphs: list[Paragraph] = Field(min_length=1)
    reference_abstract: Optional[str] = None
    source_path: str = ""

    @model_validator(mode="after")
    def indices_consecutive(self) -> "Article":
        for position, paragraph in enumerate(self.paragraphs):
            if paragraph.index != position:
                raise ValueError(f"paragraph index {paragraph.index} at position {position}")
        return self

    @property
    def full_text(self) -> str:
        """Source document text used by token statistics and source-based metrics."""
        return "\n\n".join(p.text for p in self.paragraphs)

    def to_jsonl_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "paragraphs": [
                {"text": p.text, "section_header": p.section_header} for p in self.paragraphs
            ],
            "reference_abstract": self.reference_abstract,
        }


class JsonlParagraph(BaseModel):
    """Paragraph as stored on disk (index is implied by position)."""

    model_config = ConfigDict(extra="forbid")

    text: str
    section_header: Optional[str] = None


class JsonlArticle(BaseModel):
    """One line of the canonical JSONL corpus."""

    model_config = ConfigDict(extra="ignore")

    doc_id: str = Field(min_length=1)
    paragraphs: list[JsonlParagraph] = Field(min_length=1)
    reference_abstract: Optional[str] = None

    def to_article(self, source_path: str = "") -> Article:
        return Article(
            doc_id=self.doc_id,
            paragraphs=[
                Paragraph(index=i, text=p.text, section_header=p.section_header)
                for i, p in enumerate(self.paragraphs)
            ],
            reference_abstract=self.reference_abstract,
            source_path=source_path,
        )


# ========== Split / Stats Schemas ==========

class DatasetSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    ratios: tuple[float, float, float]

    def ids_for(self, subset: str) -> tuple[str, ...]:
        return {"train": self.train_ids, "val": self.val_ids, "test": self.test_ids}[subset]


class TokenStats(BaseModel):
    count: int = Field(ge=1)
    median: int
    iqr_low: int
    iqr_high: int
    mean: float
    share_over_limit: float = Field(ge=0.0, le=1.0)
    limit: int

    @model_validator(mode="after")
    def quartiles_ordered(self) -> "TokenStats":
        if not self.iqr_low <= self.median <= self.iqr_high:
            raise ValueError("expected iqr_low <= median <= iqr_high")
        return self
