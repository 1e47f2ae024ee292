from __future__ import annotations

import random

import networkx as nx
import numpy as np
import pytest

from app.config import settings
from app.exceptions import EmptyLexicon, EmptyText
from app.schemas.entities import LinkedConcept, LinkedConceptSet
from app.services.entities import (
    ConceptLexicon,
    build_graph,
    extract_concepts,
    extract_phrases,
    facet_entities,
    link_concepts,
    textrank,
    top_n,
)


@pytest.fixture(scope="module")
def lexicon() -> ConceptLexicon:
    return ConceptLexicon.load(settings.lexicon_path)


def dense_textrank(graph: nx.Graph, damping: float) -> dict[str, float]:
    """Solve (I - dM) s = (1 - d) 1 directly."""
    nodes = sorted(graph.nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    m = np.zeros((len(nodes), len(nodes)))
    for u in nodes:
        strength = sum(w for _, _, w in graph.edges(u, data="weight"))
        for v in graph.neighbors(u):
            m[pos[v], pos[u]] = graph[u][v]["weight"] / strength
    s = np.linalg.solve(np.eye(len(nodes)) - damping * m, np.full(len(nodes), 1 - damping))
    return {n: float(s[pos[n]]) for n in nodes}


# ========== Graph ==========

def test_build_graph_windows_and_weights() -> None:
    candidate = build_graph("Aspirin reduces fever. Aspirin reduces pain.", window=2)
    g = candidate.graph

    assert candidate.window == 2
    assert set(g.nodes) == {"aspirin", "reduces", "fever", "pain"}
    assert g["aspirin"]["reduces"]["weight"] == 2
    assert g["reduces"]["fever"]["weight"] == 1
    assert g["fever"]["aspirin"]["weight"] == 1
    assert not g.has_edge("aspirin", "pain")


def test_build_graph_rejects_bad_input() -> None:
    with pytest.raises(ValueError):
        build_graph("aspirin fever", window=1)
    with pytest.raises(EmptyText):
        build_graph("the and of, .")


# ========== TextRank ==========

def test_textrank_matches_dense_solution() -> None:
    rng = random.Random(3)
    for _ in range(20):
        g = nx.Graph()
        n = rng.randint(2, 15)
        g.add_nodes_from(f"w{i}" for i in range(n))
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < 0.3:
                    g.add_edge(f"w{i}", f"w{j}", weight=rng.randint(1, 4))

        scores = textrank(g, damping=0.85, tol=1e-12, max_iter=1000)
        expected = dense_textrank(g, 0.85)
        for node in g.nodes:
            assert abs(scores[node] - expected[node]) < 1e-8


def test_textrank_symmetric_graphs_are_exactly_uniform() -> None:
    for g in (nx.cycle_graph(7), nx.complete_graph(5)):
        g = nx.relabel_nodes(g, lambda i: f"n{i}")
        nx.set_edge_attributes(g, 1, "weight")
        scores = textrank(g)
        assert len(set(scores.values())) == 1


def test_isolated_node_keeps_base_score() -> None:
    g = nx.Graph()
    g.add_node("alone")
    g.add_edge("a", "b", weight=1)
    assert textrank(g)["alone"] == pytest.approx(0.15)


# ========== Phrases and linking ==========

def test_extract_phrases_merges_adjacent_top_words(lexicon: ConceptLexicon) -> None:
    scores = {"breast": 3.0, "cancer": 2.0, "risk": 1.0, "fell": 0.1, "aspirin": 0.5}
    phrases = extract_phrases("Breast cancer risk fell with aspirin.", scores)

    assert [(p.text, p.score) for p in phrases] == [("breast cancer", 5.0)]
    linked = link_concepts(phrases, lexicon)
    assert top_n(linked, 5) == ["Malignant neoplasm of breast"]


def test_top_n_breaks_ties_by_concept_id() -> None:
    concepts = LinkedConceptSet(concepts={
        cid: LinkedConcept(concept_id=cid, preferred_term=term, score=score, matched_phrases=[term])
        for cid, term, score in [("C2", "Second", 1.0), ("C1", "First", 1.0), ("C3", "Best", 2.0)]
    })
    assert top_n(concepts, 2) == ["Best", "First"]
    with pytest.raises(ValueError):
        top_n(concepts, 0)


def test_extract_concepts_prefers_longest_match(lexicon: ConceptLexicon) -> None:
    found = extract_concepts("Breast cancer and type 2 diabetes increased; tumour growth.", lexicon)
    assert found == {"C0006142", "C0011860", "C0027651"}


def test_empty_lexicon() -> None:
    empty = ConceptLexicon(entries={}, preferred_term={})
    with pytest.raises(EmptyLexicon):
        link_concepts([], empty)
    with pytest.raises(EmptyLexicon):
        extract_concepts("fever", empty)


def test_lexicon_requires_preferred_terms() -> None:
    with pytest.raises(ValueError):
        ConceptLexicon(entries={"fever": "C1"}, preferred_term={})


def test_lexicon_digest_is_content_based() -> None:
    rows = [("Fever", "C1", "Fever"), ("pyrexia", "C1", "")]
    assert ConceptLexicon.from_rows(rows).digest == ConceptLexicon.from_rows(list(reversed(rows))).digest


def test_facet_entities(lexicon: ConceptLexicon) -> None:
    text = (
        "Aspirin lowered fever in children with influenza. Fever returned after aspirin was stopped. "
        "Children with influenza and fever were followed."
    )
    entities = facet_entities(text, lexicon, 2)

    assert 1 <= len(entities) <= 2
    assert set(entities) <= set(lexicon.preferred_term.values())
    assert facet_entities("the of and", lexicon, 5) == []
