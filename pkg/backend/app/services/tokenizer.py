"""Shared whitespace/punctuation tokenizer.

Token counts (corpus statistics, NS balancing) use `tokenize`; every metric
uses `metric_tokens`, which additionally case-folds.
"""

import unicodedata


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Split on whitespace, then split leading/trailing punctuation into single-character tokens.

    Internal punctuation is kept ("COVID-19", "p<0.05", "3.5").
    """
    tokens: list[str] = []
    for chunk in text.split():
        start, end = 0, len(chunk)
        while start < end and _is_punct(chunk[start]):
            start += 1
        while end > start and _is_punct(chunk[end - 1]):
            end -= 1
        tokens.extend(chunk[:start])
        if start < end:
            tokens.append(chunk[start:end])
        tokens.extend(chunk[end:])
    return tokens


def metric_tokens(text: str) -> list[str]:
    return [token.casefold() for token in tokenize(text)]


def is_content_token(token: str) -> bool:
    """True when the token carries at least one letter or digit."""
    return any(ch.isalnum() for ch in token)
