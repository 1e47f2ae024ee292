"""Corpus ingestion: JATS XML import, canonical JSONL I/O, dataset splits and token statistics."""

import json
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
import pandas as pd
from lxml import etree
from parsel import Selector
from pydantic import ValidationError

from app.exceptions import BadRatios, DuplicateIds, EmptyCorpus, FacetForgeError, MalformedXml, NoBody, SchemaError
from app.schemas.corpus import Article, DatasetSplit, JsonlArticle, Paragraph, TokenStats
from app.services.tokenizer import tokenize

logger = logging.getLogger(__name__)

# Containers whose paragraphs are captions or table cells, not running text
_SKIPPED_CONTAINERS = ("fig", "table-wrap", "table", "supplementary-material", "disp-quote")


def _clean(text: str) -> str:
    return " ".join(text.split())


def _node_text(node: Selector) -> str:
    return _clean(" ".join(node.xpath(".//text()").getall()))


def _doc_id(sel: Selector, fallback: str) -> str:
    pmc = sel.xpath('//article-meta/article-id[@pub-id-type="pmc" or @pub-id-type="pmcid"]/text()').get()
    if pmc:
        pmc = pmc.strip()
        return pmc if pmc.upper().startswith("PMC") else f"PMC{pmc}"
    pmid = sel.xpath('//article-meta/article-id[@pub-id-type="pmid"]/text()').get()
    if pmid:
        return pmid.strip()
    return fallback


def _abstract(sel: Selector) -> Optional[str]:
    abstracts = sel.xpath("//front//abstract[not(@abstract-type)]") or sel.xpath("//front//abstract")
    if not abstracts:
        return None
    node = abstracts[0]
    paragraphs = [_node_text(p) for p in node.xpath(".//p")]
    text = " ".join(p for p in paragraphs if p) or _node_text(node)
    return text or None


# ========== JATS import ==========

def parse_jats(xml_bytes: bytes, doc_id: Optional[str] = None, source_path: str = "") -> Article:
    """Parse one JATS/PMC article.

    Every leaf <p> of <body> becomes a paragraph, in document order, with the
    title of its nearest enclosing <sec> as section header. Paragraphs inside
    figures and tables are skipped.

    Raises:
        MalformedXml: the bytes are not well-formed XML.
        NoBody: no body paragraph has text.
    """
    try:
        root = etree.fromstring(xml_bytes, parser=etree.XMLParser(resolve_entities=False, no_network=True))
    except etree.XMLSyntaxError as e:
        raise MalformedXml(f"{source_path or '<bytes>'}: {e}") from e

    sel = Selector(root=root, type="xml")
    sel.remove_namespaces()

    skip = " or ".join(f"ancestor::{name}" for name in _SKIPPED_CONTAINERS)
    leaf_paragraphs = sel.xpath(f"//body//p[not(.//p)][not({skip})]")

    paragraphs: list[Paragraph] = []
    for node in leaf_paragraphs:
        text = _node_text(node)
        if not text:
            continue
        header = node.xpath("ancestor::sec[title][1]/title")
        paragraphs.append(
            Paragraph(
                index=len(paragraphs),
                text=text,
                section_header=_node_text(header[0]) if header else None,
            )
        )

    fallback_id = doc_id or (Path(source_path).stem if source_path else "unknown")
    resolved_id = doc_id or _doc_id(sel, fallback_id)
    if not paragraphs:
        raise NoBody(f"{resolved_id}: no extractable body paragraphs")

    return Article(
        doc_id=resolved_id,
        paragraphs=paragraphs,
        reference_abstract=_abstract(sel),
        source_path=source_path,
    )


def list_xml_inputs(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix.lower() == ".xml")
    return [path]


def import_jats(paths: list[Path], workers: int = 1) -> tuple[list[Article], list[tuple[Path, FacetForgeError]]]:
    """Parse many files; per-file failures are collected, not raised. Output keeps input order."""

    def _parse(path: Path) -> Article | FacetForgeError:
        try:
            return parse_jats(path.read_bytes(), source_path=str(path))
        except FacetForgeError as e:
            return e
        except OSError as e:
            return MalformedXml(f"{path}: {e}")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = list(executor.map(_parse, paths))

    articles: list[Article] = []
    errors: list[tuple[Path, FacetForgeError]] = []
    for path, result in zip(paths, results):
        if isinstance(result, Article):
            articles.append(result)
        else:
            logger.warning(f"Skipping {path}: {result}")
            errors.append((path, result))
    return articles, errors


# ========== JSONL ==========

class JsonlArticles:
    """Iterable over a JSONL corpus.

    Malformed lines are skipped and collected in `errors`; the iteration only
    raises when every non-blank line failed.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.errors: list[SchemaError] = []

    def __iter__(self) -> Iterator[Article]:
        self.errors = []
        lines = 0
        with open(self.path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                lines += 1
                try:
                    record = JsonlArticle.model_validate(json.loads(line))
                    article = record.to_article(source_path=str(self.path))
                except (json.JSONDecodeError, ValidationError) as e:
                    error = SchemaError(line_no, _short_error(e))
                    logger.warning(f"{self.path}: {error}")
                    self.errors.append(error)
                    continue
                yield article
        if lines and len(self.errors) == lines:
            raise SchemaError(0, f"all {lines} lines of {self.path} failed validation")


def _short_error(e: Exception) -> str:
    if isinstance(e, ValidationError):
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        return f"{location}: {first['msg']}" if location else first["msg"]
    return str(e)


def load_jsonl(path: str | Path) -> JsonlArticles:
    return JsonlArticles(path)


def write_jsonl(articles: Iterable[Article], path: str | Path) -> int:
    """Write the canonical corpus format. Returns the number of lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for article in articles:
            f.write(json.dumps(article.to_jsonl_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


# ========== Splits ==========

def split_dataset(ids: list[str], ratios: tuple[float, float, float], seed: int) -> DatasetSplit:
    """Shuffle ids with a seeded PCG64 generator and cut train/val/test.

    Validation and test sizes are floor(ratio * n); the remainder goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    if len(set(ids)) != len(ids):
        duplicates = sorted(i for i, c in Counter(ids).items() if c > 1)[:5]
        raise DuplicateIds(f"duplicate ids: {duplicates}")

    n = len(ids)
    n_val = math.floor(ratios[1] * n + 1e-9)
    n_test = math.floor(ratios[2] * n + 1e-9)
    n_train = n - n_val - n_test

    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]
    return DatasetSplit(
        train_ids=tuple(shuffled[:n_train]),
        val_ids=tuple(shuffled[n_train:n_train + n_val]),
        test_ids=tuple(shuffled[n_train + n_val:]),
        seed=seed,
        ratios=tuple(ratios),
    )


# ========== Statistics ==========

def corpus_stats(articles: Iterable[Article], limit: int) -> TokenStats:
    """Full-text token statistics; quartiles use the lower order statistic so they stay integers."""
    counts = pd.Series([len(tokenize(a.full_text)) for a in articles], dtype="int64")
    if counts.empty:
        raise EmptyCorpus("no articles to summarize")

    q1, median, q3 = (int(v) for v in counts.quantile([0.25, 0.5, 0.75], interpolation="lower"))
    return TokenStats(
        count=len(counts),
        median=median,
        iqr_low=q1,
        iqr_high=q3,
        mean=float(counts.mean()),
        share_over_limit=float((counts > limit).mean()),
        limit=limit,
    )
