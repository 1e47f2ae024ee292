"""Pipeline services."""

from app.services.corpus import load_jsonl, parse_jats, split_dataset
from app.services.llm_client import LlmClient
from app.services.metrics import evaluate_record, evaluate_reference
from app.services.stats import align, paired_bootstrap
from app.services.summarizer import AbstractGenerator

__all__ = [
    "parse_jats",
    "load_jsonl",
    "split_dataset",
    "LlmClient",
    "AbstractGenerator",
    "evaluate_record",
    "evaluate_reference",
    "align",
    "paired_bootstrap",
]
