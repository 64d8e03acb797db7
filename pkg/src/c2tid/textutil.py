"""Small text helpers shared by the embedding, extraction and scoring stages."""

from __future__ import annotations

import re
from typing import Iterable, List

# Alphanumeric runs; underscore counts as a boundary.
_WORD_RE = re.compile(r"[^\W_]+")
_NON_ALNUM_RE = re.compile(r"[\W_]+")


def words(text: str) -> List[str]:
    """Lowercase ``text`` and split it on non-alphanumeric boundaries."""
    return _WORD_RE.findall(text.lower())


def normalize_label(label: str) -> str:
    """Collapse a curated multi-word label into one keyword token.

    ``"20th-Century  Physicists"`` becomes ``"20th_century_physicists"``, so the
    label stays whole but can never contain a docid separator.
    """
    return _NON_ALNUM_RE.sub("_", label.lower()).strip("_")


def read_word_list(path: str) -> List[str]:
    """Read a stopword/blocklist file: one UTF-8 entry per line, blanks ignored."""
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def distinct(items: Iterable[str]) -> List[str]:
    """Order-preserving de-duplication."""
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out
