"""Rhetorical facet labels and facet bundles."""

from enum import Enum

from pydantic import BaseModel, model_validator

from app.schemas.corpus import Article


class FacetLabel(str, Enum):
    BACKGROUND = "Background"
    OBJECTIVE = "Objective"
    METHODS = "Methods"
    RESULTS = "Results"
    CONCLUSIONS = "Conclusions"
    OTHERS = "Others"
    INTRO = "Intro"
    MAIN_IDEA = "MainIdea"
    RESULTS_CONCLUSIONS = "ResultsConclusions"

    @property
    def display_name(self) -> str:
        """Name used in prompts and guideline tables."""
        return _DISPLAY_NAMES.get(self, self.value)


_DISPLAY_NAMES = {
    FacetLabel.MAIN_IDEA: "Main Idea",
    FacetLabel.RESULTS_CONCLUSIONS: "Results & Conclusions",
}


class FacetSchema(str, Enum):
    PRIMARY6 = "Primary6"
    FALLBACK3 = "Fallback3"


PRIMARY_ORDER: tuple[FacetLabel, ...] = (
    FacetLabel.BACKGROUND,
    FacetLabel.OBJECTIVE,
    FacetLabel.METHODS,
    FacetLabel.RESULTS,
    FacetLabel.CONCLUSIONS,
    FacetLabel.OTHERS,
)
FALLBACK_ORDER: tuple[FacetLabel, ...] = (
    FacetLabel.INTRO,
    FacetLabel.MAIN_IDEA,
    FacetLabel.RESULTS_CONCLUSIONS,
)

SCHEMA_ORDER = {FacetSchema.PRIMARY6: PRIMARY_ORDER, FacetSchema.FALLBACK3: FALLBACK_ORDER}


class FacetBundle(BaseModel):
    """Partition of an article's paragraph indices into facets."""

    facet_schema: FacetSchema
    facets: dict[FacetLabel, list[int]]
    article_ref: str

    @model_validator(mode="after")
    def check_shape(self) -> "FacetBundle":
        expected = set(SCHEMA_ORDER[self.facet_schema])
        if set(self.facets) != expected:
            raise ValueError(f"{self.facet_schema.value} bundle needs facets {sorted(f.value for f in expected)}")
        seen: set[int] = set()
        for label, indices in self.facets.items():
            if any(b <= a for a, b in zip(indices, indices[1:])):
                raise ValueError(f"indices of {label.value} are not strictly increasing")
            if seen.intersection(indices):
                raise ValueError(f"paragraph assigned to more than one facet ({label.value})")
            seen.update(indices)
        return self

    @property
    def order(self) -> tuple[FacetLabel, ...]:
        return SCHEMA_ORDER[self.facet_schema]

    def covers(self, article: Article) -> bool:
        """True when the facets partition exactly the article's paragraph indices."""
        assigned = sorted(i for indices in self.facets.values() for i in indices)
        return assigned == list(range(len(article.paragraphs)))

    def facet_text(self, article: Article, label: FacetLabel) -> str:
        return "\n\n".join(article.paragraphs[i].text for i in self.facets[label])

    def to_dict(self) -> dict:
        return {
            "schema": self.facet_schema.value,
            "facets": {label.value: list(self.facets[label]) for label in self.order},
        }


def empty_facets(schema: FacetSchema) -> dict[FacetLabel, list[int]]:
    return {label: [] for label in SCHEMA_ORDER[schema]}
