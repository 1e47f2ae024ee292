"""Closed-form summary metrics: n-gram novelty, extractive fragments, ROUGE-L, concept recall.

All token inputs come from `metric_tokens`, so every metric shares one
tokenization. Source-based metrics compare against the article full text;
ROUGE-L and concept recall compare against the reference abstract.
"""

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional

import pandas as pd

from app.exceptions import EmptyReference, EmptySummary, SchemaError
from app.schemas.corpus import Article
from app.schemas.generation import GenerationRecord
from app.schemas.metrics import METRIC_COLUMNS, Fragment, FragmentSet, MetricReport
from app.services.entities import ConceptLexicon, extract_concepts
from app.services.tokenizer import metric_tokens

logger = logging.getLogger(__name__)

EXTERNAL_COLUMNS = ["doc_id", "metric", "value"]


# ========== Source-based metrics ==========

def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def ngram_novelty(summary: list[str], source: list[str], n: int) -> float:
    """Share of summary n-gram occurrences that never occur in the source."""
    if n < 1:
        raise ValueError("n must be positive")
    grams = _ngrams(summary, n)
    if not grams:
        return 0.0
    seen = set(_ngrams(source, n))
    return sum(1 for g in grams if g not in seen) / len(grams)


def extractive_fragments(summary: list[str], source: list[str]) -> FragmentSet:
    """Greedy left-to-right longest-match scan of the summary against the source.

    At each summary position the longest token run found anywhere in the
    source is emitted (earliest source position on ties) and the scan jumps
    past it; unmatched tokens advance by one.
    """
    positions: dict[str, list[int]] = defaultdict(list)
    for j, token in enumerate(source):
        positions[token].append(j)

    fragments: list[Fragment] = []
    i = 0
    while i < len(summary):
        best_len, best_start = 0, -1
        for j in positions.get(summary[i], ()):
            k = 0
            while i + k < len(summary) and j + k < len(source) and summary[i + k] == source[j + k]:
                k += 1
            if k > best_len:
                best_len, best_start = k, j
        if best_len:
            fragments.append(Fragment(summary_start=i, source_start=best_start, length=best_len))
            i += best_len
        else:
            i += 1
    return FragmentSet(fragments=fragments, summary_len=len(summary), source_len=len(source))


def coverage(frag: FragmentSet) -> float:
    if frag.summary_len == 0:
        return 0.0
    return sum(frag.lengths) / frag.summary_len


def density(frag: FragmentSet) -> float:
    if frag.summary_len == 0:
        return 0.0
    return sum(length * length for length in frag.lengths) / frag.summary_len


def compression(source_len: int, summary_len: int) -> float:
    if summary_len <= 0:
        raise EmptySummary("compression is undefined for an empty summary")
    return source_len / summary_len


# ========== Reference-based metrics ==========

def _lcs_length(a: list[str], b: list[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b):
            current.append(previous[j] + 1 if x == y else max(previous[j + 1], current[j]))
        previous = current
    return previous[-1]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """Summary-level ROUGE-L F1 (beta = 1)."""
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


def umls_recall(gen_concepts: set[str], ref_concepts: set[str]) -> float:
    if not ref_concepts:
        raise EmptyReference("reference has no concepts")
    return len(gen_concepts & ref_concepts) / len(ref_concepts)


# ========== Per-document reports ==========

def _source_metrics(summary: list[str], source: list[str]) -> dict:
    frag = extractive_fragments(summary, source)
    return {
        "bigram_novelty": ngram_novelty(summary, source, 2),
        "trigram_novelty": ngram_novelty(summary, source, 3),
        "coverage": coverage(frag),
        "density": density(frag),
        "compression": compression(len(source), len(summary)),
    }


def evaluate_record(
    record: GenerationRecord,
    article: Article,
    lexicon: Optional[ConceptLexicon] = None,
) -> MetricReport:
    """Score one generated abstract; fields whose inputs are missing stay unset."""
    if record.doc_id != article.doc_id:
        raise ValueError(f"record {record.doc_id} paired with article {article.doc_id}")
    summary = metric_tokens(record.final_abstract) if record.error is None else []
    if not summary:
        return MetricReport(doc_id=record.doc_id)

    values = _source_metrics(summary, metric_tokens(article.full_text))
    reference = article.reference_abstract or ""
    reference_tokens = metric_tokens(reference)
    if reference_tokens:
        values["rouge_l"] = rouge_l(summary, reference_tokens)
        if lexicon is not None:
            ref_concepts = extract_concepts(reference, lexicon)
            if ref_concepts:
                values["umls_recall"] = umls_recall(extract_concepts(record.final_abstract, lexicon), ref_concepts)
    return MetricReport(doc_id=record.doc_id, **values)


def evaluate_reference(article: Article) -> MetricReport:
    """Score the human abstract against its own article (source-based metrics only)."""
    summary = metric_tokens(article.reference_abstract or "")
    if not summary:
        return MetricReport(doc_id=article.doc_id)
    return MetricReport(doc_id=article.doc_id, **_source_metrics(summary, metric_tokens(article.full_text)))


# ========== External scores ==========

def import_external_scores(
    path: str | Path,
    reports: list[MetricReport],
) -> tuple[list[MetricReport], list[str]]:
    """Attach `doc_id,metric,value` rows to the matching reports.

    Returns:
        (merged reports in input order, warnings). Unknown ids and duplicate
        (doc_id, metric) pairs produce warnings; the last duplicate wins.

    Raises:
        SchemaError: wrong header or a non-numeric value (line numbers count the header as line 1).
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise SchemaError(1, "empty file") from e
    if list(frame.columns) != EXTERNAL_COLUMNS:
        raise SchemaError(1, f"expected header {','.join(EXTERNAL_COLUMNS)}, got {','.join(frame.columns)}")

    known = {r.doc_id for r in reports}
    external: dict[str, dict[str, float]] = defaultdict(dict)
    warnings: list[str] = []
    for row_no, (doc_id, metric, raw) in enumerate(frame.itertuples(index=False, name=None), start=2):
        doc_id, metric = doc_id.strip(), metric.strip()
        try:
            value = float(raw)
        except ValueError as e:
            raise SchemaError(row_no, f"value {raw!r} is not a number") from e
        if doc_id not in known:
            warnings.append(f"line {row_no}: unknown doc_id {doc_id}")
            continue
        if metric in external[doc_id]:
            warnings.append(f"line {row_no}: duplicate {doc_id}/{metric}, keeping the last value")
        external[doc_id][metric] = value

    for warning in warnings:
        logger.warning(f"External scores: {warning}")
    merged = [
        r.model_copy(update={"external": {**r.external, **external[r.doc_id]}}) if r.doc_id in external else r
        for r in reports
    ]
    return merged, warnings


# ========== Tables ==========

def reports_to_frame(reports: Iterable[MetricReport]) -> pd.DataFrame:
    """One row per document; metric columns with no value anywhere are dropped."""
    rows = [r.to_row() for r in reports]
    frame = pd.DataFrame(rows)
    if frame.empty:
        return pd.DataFrame(columns=["doc_id"])
    externals = sorted(c for c in frame.columns if c != "doc_id" and c not in METRIC_COLUMNS)
    columns = ["doc_id"] + [c for c in METRIC_COLUMNS if c in frame.columns] + externals
    frame = frame[columns]
    metric_part = frame.drop(columns="doc_id").astype(float).dropna(axis=1, how="all")
    return pd.concat([frame[["doc_id"]], metric_part], axis=1)


def load_report_frame(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"doc_id": str})
    if "doc_id" not in frame.columns:
        raise SchemaError(1, "report file has no doc_id column")
    return frame


def write_reports(reports: list[MetricReport], path: str | Path) -> list[Path]:
    """Write the per-document CSV plus a JSONL sibling; returns the written paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_to_frame(reports).to_csv(path, index=False)
    jsonl_path = path.with_suffix(".jsonl")
    with open(jsonl_path, "w", encoding="utf-8") as f:
        for report in reports:
            f.write(json.dumps(report.model_dump(), ensure_ascii=False) + "\n")
    return [path, jsonl_path]


def aggregate_reports(
    reports: list[MetricReport] | pd.DataFrame,
    reference: Optional[pd.DataFrame] = None,
    label: str = "mean",
) -> pd.DataFrame:
    """Mean of every metric under the results-table headers (Bi-g, Tri-g, ...).

    With a `reference` aggregate (this function's own output), cells become
    strings like "0.397 (-0.098)": the mean and its difference from the reference.
    """
    frame = reports if isinstance(reports, pd.DataFrame) else reports_to_frame(reports)
    means = frame.drop(columns="doc_id").mean(axis=0, skipna=True).dropna()
    means.index = [METRIC_COLUMNS.get(c, c) for c in means.index]
    table = pd.DataFrame([means.to_dict()], index=[label])
    if reference is None:
        return table

    ref_row = reference.iloc[0]
    cells = {}
    for column, value in means.items():
        if column in ref_row.index and pd.notna(ref_row[column]):
            cells[column] = f"{value:.3f} ({value - float(ref_row[column]):+.3f})"
        else:
            cells[column] = f"{value:.3f}"
    return pd.DataFrame([cells], index=[label])
