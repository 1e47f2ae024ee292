"""Readers for the shipped lookup tables (TSV files and word lists)."""

import csv
from pathlib import Path

import pandas as pd

from app.config import ASSETS_DIR


def read_tsv(path: str | Path, names: list[str]) -> pd.DataFrame:
    """Read a headerless TSV; lines starting with '#' are comments, fields are taken verbatim."""
    frame = pd.read_csv(
        path,
        sep="\t",
        names=names,
        header=None,
        comment="#",
        dtype=str,
        quoting=csv.QUOTE_NONE,
        keep_default_na=False,
        skip_blank_lines=True,
    )
    return frame.apply(lambda col: col.str.strip())


def read_wordlist(name: str) -> list[str]:
    """Entries of a shipped one-per-line list, comments and blanks dropped."""
    lines = (ASSETS_DIR / name).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#")]
