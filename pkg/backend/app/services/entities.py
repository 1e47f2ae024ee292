"""TextRank keyphrases and concept-lexicon linking."""

import hashlib
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable

import networkx as nx

from app.exceptions import EmptyLexicon, EmptyText
from app.schemas.entities import LinkedConcept, LinkedConceptSet, ScoredPhrase
from app.services.assets import read_tsv, read_wordlist
from app.services.tokenizer import is_content_token, metric_tokens

MAX_PHRASE_TOKENS = 5


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    return frozenset(word.casefold() for word in read_wordlist("stopwords.txt"))


def content_words(text: str) -> list[str]:
    """Case-folded tokens with a letter or digit that are not stopwords, in text order."""
    stop = stopwords()
    return [t for t in metric_tokens(text) if is_content_token(t) and t not in stop]


def normalize_surface(surface: str) -> str:
    return " ".join(metric_tokens(surface))


# ========== Lexicon ==========

@dataclass
class ConceptLexicon:
    """Surface form (normalized) -> concept id, plus one preferred term per concept."""

    entries: dict[str, str]
    preferred_term: dict[str, str]
    max_len: int = field(init=False)
    digest: str = field(init=False)

    def __post_init__(self) -> None:
        missing = sorted(set(self.entries.values()) - set(self.preferred_term))
        if missing:
            raise ValueError(f"concepts without preferred term: {missing[:5]}")
        self.max_len = max((len(s.split()) for s in self.entries), default=0)
        blob = "\n".join(f"{s}\t{c}" for s, c in sorted(self.entries.items()))
        self.digest = hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, str]]) -> "ConceptLexicon":
        entries: dict[str, str] = {}
        preferred: dict[str, str] = {}
        for surface, concept_id, term in rows:
            key = normalize_surface(surface)
            if not key or not concept_id:
                continue
            entries.setdefault(key, concept_id)
            if term:
                preferred.setdefault(concept_id, term)
        return cls(entries=entries, preferred_term=preferred)

    @classmethod
    def load(cls, path: str | Path) -> "ConceptLexicon":
        frame = read_tsv(path, ["surface", "concept_id", "preferred_term"])
        return cls.from_rows(frame.itertuples(index=False, name=None))

    def __len__(self) -> int:
        return len(self.entries)


# ========== TextRank ==========

@dataclass
class CandidateGraph:
    graph: nx.Graph
    window: int


def build_graph(text: str, window: int = 4) -> CandidateGraph:
    """Undirected co-occurrence graph of content words within a sliding window."""
    if window < 2:
        raise ValueError("window must be at least 2")
    words = content_words(text)
    if not words:
        raise EmptyText("no content words")

    graph = nx.Graph()
    graph.add_nodes_from(dict.fromkeys(words))
    for i, u in enumerate(words):
        for v in words[i + 1:i + window]:
            if u == v:
                continue
            if graph.has_edge(u, v):
                graph[u][v]["weight"] += 1
            else:
                graph.add_edge(u, v, weight=1)
    return CandidateGraph(graph=graph, window=window)


def textrank(
    graph: CandidateGraph | nx.Graph,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> dict[str, float]:
    """Weighted PageRank in the unnormalized TextRank form.

    S(v) = (1 - d) + d * sum_u w(u, v) / strength(u) * S(u), iterated from
    S = 1 until the largest per-node change drops below `tol`. Sums use
    math.fsum, so the result does not depend on node insertion order.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must be in (0, 1)")
    g = graph.graph if isinstance(graph, CandidateGraph) else graph
    nodes = sorted(g.nodes)
    strength = {n: math.fsum(w for _, _, w in g.edges(n, data="weight", default=1)) for n in nodes}
    weights = {
        v: [(u, g[u][v].get("weight", 1) / strength[u]) for u in g.neighbors(v)] for v in nodes
    }

    scores = {n: 1.0 for n in nodes}
    for _ in range(max_iter):
        updated = {
            v: (1 - damping) + damping * math.fsum(share * scores[u] for u, share in weights[v])
            for v in nodes
        }
        delta = max((abs(updated[n] - scores[n]) for n in nodes), default=0.0)
        scores = updated
        if delta < tol:
            break
    return scores


def extract_phrases(text: str, scores: dict[str, float], top_ratio: float = 1 / 3) -> list[ScoredPhrase]:
    """Merge adjacent top-ranked words into phrases.

    The top `ceil(len(scores) * top_ratio)` words (score desc, word asc) are
    kept; every maximal run of consecutive kept tokens in the text becomes a
    phrase scored by the sum of its word scores.
    """
    if not scores:
        return []
    ranked = sorted(scores, key=lambda w: (-scores[w], w))
    top = set(ranked[:max(1, math.ceil(len(ranked) * top_ratio))])

    phrases: dict[str, ScoredPhrase] = {}
    run: list[str] = []
    for token in metric_tokens(text) + [""]:
        if token in top:
            run.append(token)
            continue
        if run:
            phrase = " ".join(run)
            if phrase not in phrases:
                phrases[phrase] = ScoredPhrase(text=phrase, score=math.fsum(scores[w] for w in run), words=run)
            run = []
    return sorted(phrases.values(), key=lambda p: (-p.score, p.text))


# ========== Linking ==========

def link_concepts(phrases: list[ScoredPhrase], lexicon: ConceptLexicon) -> LinkedConceptSet:
    if not lexicon.entries:
        raise EmptyLexicon("concept lexicon is empty")
    concepts: dict[str, LinkedConcept] = {}
    for phrase in phrases:
        concept_id = lexicon.entries.get(normalize_surface(phrase.text))
        if concept_id is None:
            continue
        entry = concepts.get(concept_id)
        if entry is None:
            concepts[concept_id] = LinkedConcept(
                concept_id=concept_id,
                preferred_term=lexicon.preferred_term[concept_id],
                score=phrase.score,
                matched_phrases=[phrase.text],
            )
        else:
            entry.score = max(entry.score, phrase.score)
            if phrase.text not in entry.matched_phrases:
                entry.matched_phrases.append(phrase.text)
    return LinkedConceptSet(concepts=concepts)


def top_n(concept_set: LinkedConceptSet, n: int) -> list[str]:
    """Preferred terms of the n best concepts; ties go to the lower concept id."""
    if n < 1:
        raise ValueError("n must be at least 1")
    ranked = sorted(concept_set.concepts.values(), key=lambda c: (-c.score, c.concept_id))
    return [c.preferred_term for c in ranked[:n]]


def extract_concepts(text: str, lexicon: ConceptLexicon) -> set[str]:
    """Concept ids found by a greedy longest-match scan (at most 5 tokens per match)."""
    if not lexicon.entries:
        raise EmptyLexicon("concept lexicon is empty")
    tokens = metric_tokens(text)
    longest = min(MAX_PHRASE_TOKENS, lexicon.max_len)
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        for length in range(min(longest, len(tokens) - i), 0, -1):
            concept_id = lexicon.entries.get(" ".join(tokens[i:i + length]))
            if concept_id is not None:
                found.add(concept_id)
                i += length
                break
        else:
            i += 1
    return found


def facet_entities(
    text: str,
    lexicon: ConceptLexicon,
    n: int,
    window: int = 4,
    damping: float = 0.85,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> list[str]:
    """Top-n linked entities of one facet; facets without content words yield none."""
    try:
        graph = build_graph(text, window)
    except EmptyText:
        return []
    scores = textrank(graph, damping=damping, tol=tol, max_iter=max_iter)
    return top_n(link_concepts(extract_phrases(text, scores), lexicon), n)
