"""Paired bootstrap significance tests between two configurations.

Resampling uses numpy's PCG64 generator. The iterations are cut into chunks
and every chunk seeds its own PCG64 stream from
`SeedSequence(seed).spawn(n_chunks)`, so a result depends only on
(scores, mode, iters, seed) and replicates across platforms.
"""

import logging
from typing import Optional

import numpy as np
import pandas as pd

from app.exceptions import NoOverlap, TooFewPairs
from app.schemas.metrics import METRIC_COLUMNS, BootstrapMode, BootstrapResult, MetricReport, PairedScores
from app.services.metrics import reports_to_frame

logger = logging.getLogger(__name__)

DEFAULT_ITERS = 10000

# resampled rows held in memory per chunk, at most
_CHUNK_CELLS = 2_000_000

TABLE_COLUMNS = ["metric", "mean_diff", "p_value", "stars", "cell", "mode", "n"]


def _as_frame(reports: list[MetricReport] | pd.DataFrame) -> pd.DataFrame:
    frame = reports if isinstance(reports, pd.DataFrame) else reports_to_frame(reports)
    return frame.drop_duplicates("doc_id", keep="last").set_index("doc_id")


def _valid(frame: pd.DataFrame, metric: str) -> pd.Series:
    if metric not in frame.columns:
        return pd.Series(dtype=float)
    return pd.to_numeric(frame[metric], errors="coerce").dropna()


def align(
    reports_a: list[MetricReport] | pd.DataFrame,
    reports_b: list[MetricReport] | pd.DataFrame,
    metric: str,
    reports_ref: Optional[list[MetricReport] | pd.DataFrame] = None,
) -> PairedScores:
    """Pair the documents that have a valid `metric` value on every side, sorted by id."""
    a = _valid(_as_frame(reports_a), metric)
    b = _valid(_as_frame(reports_b), metric)
    ids = set(a.index) & set(b.index)
    ref = None
    if reports_ref is not None:
        ref = _valid(_as_frame(reports_ref), metric)
        ids &= set(ref.index)
    if not ids:
        raise NoOverlap(f"no document has a valid {metric} value in every report")

    doc_ids = sorted(ids)
    return PairedScores(
        doc_ids=doc_ids,
        a=a.loc[doc_ids].astype(float).tolist(),
        b=b.loc[doc_ids].astype(float).tolist(),
        ref=ref.loc[doc_ids].astype(float).tolist() if ref is not None else None,
    )


def stars(p_value: float) -> str:
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


def _differences(scores: PairedScores, mode: BootstrapMode) -> np.ndarray:
    a = np.asarray(scores.a, dtype=float)
    b = np.asarray(scores.b, dtype=float)
    if mode is BootstrapMode.RAW:
        return a - b
    if scores.ref is None:
        raise ValueError("proximity mode needs reference scores")
    ref = np.asarray(scores.ref, dtype=float)
    return np.abs(a - ref) - np.abs(b - ref)


def paired_bootstrap(
    scores: PairedScores,
    mode: BootstrapMode = BootstrapMode.RAW,
    iters: int = DEFAULT_ITERS,
    seed: int = 0,
    metric: str = "",
) -> BootstrapResult:
    """Two-sided paired bootstrap on the mean per-document difference (A minus B).

    Documents are resampled with replacement, the same indices applied to
    both systems. p = min(1, 2 * (k + 1) / (iters + 1)), where k counts
    resampled means on the opposite side of zero from the observed mean.
    In proximity mode the per-document value is |a - ref| - |b - ref|, so a
    negative difference means A lies closer to the reference.
    """
    n = len(scores)
    if n < 2:
        raise TooFewPairs(f"need at least 2 paired documents, got {n}")
    if iters < 1:
        raise ValueError("iters must be at least 1")

    x = _differences(scores, mode)
    mean_diff = float(np.mean(x))

    if mean_diff == 0.0:
        p_value = 1.0
    else:
        rows_per_chunk = max(1, min(1000, _CHUNK_CELLS // n))
        n_chunks = -(-iters // rows_per_chunk)
        children = np.random.SeedSequence(seed).spawn(n_chunks)
        opposite = 0
        remaining = iters
        for child in children:
            rows = min(rows_per_chunk, remaining)
            rng = np.random.Generator(np.random.PCG64(child))
            means = x[rng.integers(0, n, size=(rows, n))].mean(axis=1)
            opposite += int(np.count_nonzero(means <= 0.0 if mean_diff > 0 else means >= 0.0))
            remaining -= rows
        p_value = min(1.0, 2.0 * (opposite + 1) / (iters + 1))

    return BootstrapResult(
        metric=metric,
        mean_diff=mean_diff,
        p_value=p_value,
        stars=stars(p_value),
        iters=iters,
        seed=seed,
        mode=mode,
        n=n,
    )


# ========== Tables ==========

def comparison_frame(results: dict[str, BootstrapResult]) -> pd.DataFrame:
    rows = [
        {
            "metric": metric,
            "mean_diff": r.mean_diff,
            "p_value": r.p_value,
            "stars": r.stars,
            "cell": f"{r.mean_diff:+.3f}{r.stars}",
            "mode": r.mode.value,
            "n": r.n,
        }
        for metric, r in results.items()
    ]
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def emit_comparison_table(results: dict[str, BootstrapResult], fmt: str = "csv") -> str:
    """Render results as CSV or a markdown table; differences read A minus B, stars appended."""
    if fmt == "csv":
        return comparison_frame(results).to_csv(index=False)
    if fmt != "markdown":
        raise ValueError(f"unknown table format {fmt!r}")

    lines = ["| Metric | Δ (A−B) | p | mode |", "|---|---|---|---|"]
    for metric, r in results.items():
        lines.append(
            f"| {METRIC_COLUMNS.get(metric, metric)} | {r.mean_diff:+.3f}{r.stars} | {r.p_value:.4f} | {r.mode.value} |"
        )
    return "\n".join(lines) + "\n"
