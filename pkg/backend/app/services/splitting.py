"""Partition article paragraphs into rhetorical facets (first-sentence, naive and section-header splitting)."""

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

from app.exceptions import LlmTransportError, LlmUnavailable, MissingHeaderMap
from app.schemas.corpus import Article, Paragraph
from app.schemas.facets import PRIMARY_ORDER, FacetBundle, FacetLabel, FacetSchema, empty_facets
from app.schemas.generation import ClassifierBackend
from app.schemas.llm import PromptStrategy
from app.services.assets import read_tsv, read_wordlist
from app.services.llm_client import LlmClient
from app.services.prompts import render
from app.services.tokenizer import tokenize

logger = logging.getLogger(__name__)

NS_BLOCKS = 6

# Rule classifier priority; first facet with a matching cue wins
CUE_PRIORITY = (
    FacetLabel.OBJECTIVE,
    FacetLabel.CONCLUSIONS,
    FacetLabel.RESULTS,
    FacetLabel.METHODS,
    FacetLabel.BACKGROUND,
)

_BOUNDARY = re.compile(r"[.!?](?=\s+[\"'(\[]?[A-Z0-9])")

# LLM reply word -> label
_REPLY_LABELS = {
    "background": FacetLabel.BACKGROUND,
    "introduction": FacetLabel.BACKGROUND,
    "objective": FacetLabel.OBJECTIVE,
    "objectives": FacetLabel.OBJECTIVE,
    "aim": FacetLabel.OBJECTIVE,
    "method": FacetLabel.METHODS,
    "methods": FacetLabel.METHODS,
    "result": FacetLabel.RESULTS,
    "results": FacetLabel.RESULTS,
    "conclusion": FacetLabel.CONCLUSIONS,
    "conclusions": FacetLabel.CONCLUSIONS,
    "none": FacetLabel.OTHERS,
    "other": FacetLabel.OTHERS,
    "others": FacetLabel.OTHERS,
}


# ========== Sentence segmentation ==========

@lru_cache(maxsize=1)
def abbreviations() -> tuple[str, ...]:
    return tuple(a.casefold() for a in read_wordlist("abbreviations.txt"))


def _is_abbreviation(prefix: str) -> bool:
    """True when `prefix` (text up to and including a period) ends with a listed abbreviation."""
    lowered = prefix.casefold()
    for abbr in abbreviations():
        if lowered.endswith(abbr):
            start = len(lowered) - len(abbr)
            if start == 0 or not lowered[start - 1].isalnum():
                return True
    return False


def split_sentences(text: str) -> list[str]:
    """Split on . ! ? followed by whitespace and an uppercase letter or digit, skipping abbreviations."""
    sentences: list[str] = []
    start = 0
    for match in _BOUNDARY.finditer(text):
        end = match.end()
        if match.group() == "." and _is_abbreviation(text[start:end]):
            continue
        sentence = text[start:end].strip()
        if sentence:
            sentences.append(sentence)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def first_sentence(paragraph: Paragraph | str) -> str:
    text = paragraph.text if isinstance(paragraph, Paragraph) else paragraph
    sentences = split_sentences(text)
    return sentences[0] if sentences else text.strip()


# ========== Lookup tables ==========

@dataclass(frozen=True)
class CueLexicon:
    cues: dict[FacetLabel, tuple[re.Pattern, ...]]

    @classmethod
    def load(cls, path: str | Path) -> "CueLexicon":
        frame = read_tsv(path, ["cue", "facet"])
        grouped: dict[FacetLabel, list[re.Pattern]] = {label: [] for label in CUE_PRIORITY}
        for cue, facet in frame.itertuples(index=False, name=None):
            pattern = re.compile(r"(?<!\w)" + re.escape(cue.casefold()) + r"(?!\w)")
            grouped[FacetLabel(facet)].append(pattern)
        return cls(cues={label: tuple(patterns) for label, patterns in grouped.items()})

    def classify(self, sentence: str) -> FacetLabel:
        lowered = sentence.casefold()
        for label in CUE_PRIORITY:
            if any(p.search(lowered) for p in self.cues.get(label, ())):
                return label
        return FacetLabel.OTHERS


def normalize_header(header: str) -> str:
    """Case-fold, drop leading section numbering and punctuation, collapse whitespace."""
    text = re.sub(r"^\s*(?:\d+(?:\.\d+)*[.)]?|[ivxlc]+[.)])\s+", "", header.casefold())
    text = re.sub(r"[^\w\s]", " ", text)
    return " ".join(text.split())


@dataclass(frozen=True)
class HeaderMap:
    entries: dict[str, FacetLabel]

    @classmethod
    def load(cls, path: str | Path) -> "HeaderMap":
        frame = read_tsv(path, ["header", "facet"])
        return cls(entries={normalize_header(h): FacetLabel(f) for h, f in frame.itertuples(index=False, name=None)})

    def lookup(self, header: Optional[str]) -> FacetLabel:
        if not header:
            return FacetLabel.OTHERS
        return self.entries.get(normalize_header(header), FacetLabel.OTHERS)


# ========== Classifier ==========

class SentenceClassifier:
    """Labels sentences with one of the five rhetorical roles or Others.

    The LLM backend asks the chat endpoint with the CLASSIFY prompt; replies
    that map to no label, and transport failures when rule fallback is
    allowed, are answered by the cue lexicon.
    """

    def __init__(
        self,
        backend: ClassifierBackend,
        cues: CueLexicon,
        client: Optional[LlmClient] = None,
        allow_rule_fallback: bool = True,
    ):
        if backend is ClassifierBackend.LLM and client is None:
            raise ValueError("llm classifier needs a client")
        self.backend = backend
        self.cues = cues
        self.client = client
        self.allow_rule_fallback = allow_rule_fallback

    @staticmethod
    def map_reply(reply: str) -> Optional[FacetLabel]:
        words = re.findall(r"[a-z]+", reply.casefold())
        return _REPLY_LABELS.get(words[0]) if words else None

    def classify(self, sentence: str, doc_id: Optional[str] = None) -> FacetLabel:
        if not sentence.strip():
            raise ValueError("sentence must not be empty")
        if self.backend is ClassifierBackend.RULE:
            return self.cues.classify(sentence)

        try:
            reply = self.client.chat(
                render(PromptStrategy.CLASSIFY, None, sentence), request_type="classify", doc_id=doc_id
            )
        except LlmTransportError as e:
            if not self.allow_rule_fallback:
                raise LlmUnavailable(str(e)) from e
            logger.warning(f"Classifier LLM failed, using cue rules: {e}")
            return self.cues.classify(sentence)

        label = self.map_reply(reply)
        return label if label is not None else self.cues.classify(sentence)

    def classify_many(self, sentences: list[str], doc_id: Optional[str] = None) -> list[FacetLabel]:
        """Classify concurrently; output order follows input order."""
        if self.backend is ClassifierBackend.RULE or len(sentences) < 2:
            return [self.classify(s, doc_id) for s in sentences]
        workers = min(len(sentences), self.client.config.max_in_flight)
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(lambda s: self.classify(s, doc_id), sentences))


# ========== Splitters ==========

def _bundle(article: Article, labels: list[FacetLabel]) -> FacetBundle:
    facets = empty_facets(FacetSchema.PRIMARY6)
    for paragraph, label in zip(article.paragraphs, labels):
        facets[label].append(paragraph.index)
    return FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=facets, article_ref=article.doc_id)


def split_fs(article: Article, classifier: SentenceClassifier) -> FacetBundle:
    """Label every paragraph with the role of its first sentence."""
    sentences = [first_sentence(p) for p in article.paragraphs]
    return _bundle(article, classifier.classify_many(sentences, doc_id=article.doc_id))


def ns_blocks(token_counts: list[int], blocks: int = NS_BLOCKS) -> list[list[int]]:
    """Greedy contiguous blocks of paragraph positions.

    Every block targets total_tokens / blocks and is closed before a
    paragraph whose addition would overshoot the target by more than the
    block currently undershoots it. A block never takes paragraphs the
    remaining blocks need, so exactly min(blocks, n) blocks are produced.
    """
    n = len(token_counts)
    k = min(blocks, n)
    target = sum(token_counts) / blocks
    result: list[list[int]] = []
    i = 0
    for remaining_blocks in range(k, 0, -1):
        if remaining_blocks == 1:
            result.append(list(range(i, n)))
            break
        block = [i]
        current = token_counts[i]
        i += 1
        while n - i > remaining_blocks - 1:
            nxt = token_counts[i]
            if current + nxt - target > target - current:
                break
            block.append(i)
            current += nxt
            i += 1
        result.append(block)
    return result


def split_ns(article: Article) -> FacetBundle:
    """Contiguous token-balanced blocks placed in the six facet slots in order."""
    counts = [len(tokenize(p.text)) for p in article.paragraphs]
    facets = empty_facets(FacetSchema.PRIMARY6)
    for label, block in zip(PRIMARY_ORDER, ns_blocks(counts)):
        facets[label] = [article.paragraphs[i].index for i in block]
    return FacetBundle(facet_schema=FacetSchema.PRIMARY6, facets=facets, article_ref=article.doc_id)


def split_sh(article: Article, header_map: Optional[HeaderMap]) -> FacetBundle:
    """Map each paragraph's section header through the normalization table; unknown headers go to Others."""
    if header_map is None:
        raise MissingHeaderMap("section-header splitting needs a header map")
    return _bundle(article, [header_map.lookup(p.section_header) for p in article.paragraphs])
