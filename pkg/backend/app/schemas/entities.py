"""Pydantic schemas for keyphrases and linked concepts."""

from typing import Protocol, runtime_checkable

from pydantic import BaseModel


@runtime_checkable
class ConceptLookup(Protocol):
    """What generation needs from a concept lexicon (see services.entities.ConceptLexicon)."""

    entries: dict[str, str]
    preferred_term: dict[str, str]
    max_len: int
    digest: str


class ScoredPhrase(BaseModel):
    text: str
    score: float
    words: list[str]


class LinkedConcept(BaseModel):
    concept_id: str
    preferred_term: str
    score: float
    matched_phrases: list[str]


class LinkedConceptSet(BaseModel):
    """One entry per concept id."""

    concepts: dict[str, LinkedConcept] = {}

    def __len__(self) -> int:
        return len(self.concepts)
