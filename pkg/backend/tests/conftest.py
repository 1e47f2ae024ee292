from __future__ import annotations

import random
from pathlib import Path
from typing import Callable, Optional

import pytest

from app.schemas.corpus import Article, Paragraph
from app.schemas.llm import LlmBackendKind, LlmConfig, ScriptRule
from app.services.llm_client import LlmClient

FIXTURES = Path(__file__).parent / "fixtures"

WORDS = (
    "fever aspirin children cohort tumor insulin glucose patients protein mutation "
    "increased decreased trial dose placebo risk outcome analysis baseline response"
).split()

HEADERS = ("Introduction", "Aims", "Methods", "Results", "Discussion", "Acknowledgements", None)


@pytest.fixture(autouse=True)
def isolated_runtime(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep log and progress files out of the source tree and ignore the caller's environment."""
    monkeypatch.setenv("FF_LOG_PATH", str(tmp_path / "facetforge.log"))
    monkeypatch.setenv("FF_PROGRESS_PATH", str(tmp_path / "progress.json"))
    for name in ("FF_CONFIG", "FF_LLM_URL", "FF_LLM_MODEL", "FF_WORKERS", "FF_DATABASE_URL"):
        monkeypatch.delenv(name, raising=False)


def build_article(
    doc_id: str,
    texts: list[str],
    headers: Optional[list[Optional[str]]] = None,
    abstract: Optional[str] = None,
) -> Article:
    headers = headers or [None] * len(texts)
    return Article(
        doc_id=doc_id,
        paragraphs=[Paragraph(index=i, text=t, section_header=h) for i, (t, h) in enumerate(zip(texts, headers))],
        reference_abstract=abstract,
    )


def random_article(rng: random.Random, doc_id: str, max_paragraphs: int = 12) -> Article:
    n = rng.randint(1, max_paragraphs)
    texts = []
    for _ in range(n):
        words = [rng.choice(WORDS) for _ in range(rng.randint(3, 40))]
        texts.append(" ".join(words).capitalize() + ".")
    headers = [rng.choice(HEADERS) for _ in range(n)]
    abstract = " ".join(rng.choice(WORDS) for _ in range(rng.randint(5, 20))) + "."
    return build_article(doc_id, texts, headers, abstract)


def scripted_client(rules: list[tuple[str, str]]) -> LlmClient:
    """Client answering by substring of the last user message; first matching rule wins."""
    config = LlmConfig(
        backend=LlmBackendKind.SCRIPTED,
        script=[ScriptRule(match=match, reply=reply) for match, reply in rules],
    )
    return LlmClient(config)


@pytest.fixture
def make_article() -> Callable[..., Article]:
    return build_article


@pytest.fixture
def make_scripted() -> Callable[[list[tuple[str, str]]], LlmClient]:
    return scripted_client
