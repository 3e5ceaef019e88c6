"""Answer normalization, exact match, and lexical answer containment."""

import re
import unicodedata
from typing import Iterable

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_WS = re.compile(r"\s+")


def _strip_punctuation(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and English articles, collapse whitespace."""
    text = _strip_punctuation(text.lower())
    text = _ARTICLES.sub(" ", text)
    return _WS.sub(" ", text).strip()


def em(prediction: str | None, gold: Iterable[str]) -> int:
    gold = list(gold)
    if not gold:
        raise ValueError("em needs at least one gold answer")
    if prediction is None:
        return 0
    pred = normalize_answer(prediction)
    return int(any(pred == normalize_answer(g) for g in gold))


def contains_answer(text: str, gold: Iterable[str]) -> bool:
    """True iff some normalized gold string occurs inside the normalized text."""
    haystack = normalize_answer(text)
    for g in gold:
        needle = normalize_answer(g)
        if needle and needle in haystack:
            return True
    return False
