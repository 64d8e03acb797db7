"""Per-document keyword priors harvested from metadata."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Tuple

from .corpus import Corpus, Document
from .textutil import normalize_label, words

Keywords = List[Tuple[str, int]]

FALLBACK_KEYWORD = "doc"

DEFAULT_BLOCKLIST = frozenset(
    {
        "all pages",
        "uncategorized",
        "all articles",
        "articles with short description",
        "short description is different from wikidata",
        "pages with citations",
    }
)


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    strategy: str = "category"
    fields: Tuple[str, ...] = ("categories",)
    blocklist: FrozenSet[str] = DEFAULT_BLOCKLIST
    stopwords: FrozenSet[str] = frozenset()
    max_keywords_per_doc: int = 16

    def __post_init__(self):
        if self.strategy not in ("category", "attribute"):
            raise ExtractionError(f"unknown strategy {self.strategy!r}")
        if not self.fields:
            raise ExtractionError("fields must be non-empty")
        if self.max_keywords_per_doc < 1:
            raise ExtractionError("max_keywords_per_doc must be >= 1")
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "blocklist", frozenset(self.blocklist))
        object.__setattr__(self, "stopwords", frozenset(s.strip().lower() for s in self.stopwords))
        # blocklist entries compared in both label and token form
        object.__setattr__(
            self,
            "_blocked",
            frozenset(normalize_label(b) for b in self.blocklist) | frozenset(b.strip().lower() for b in self.blocklist),
        )

    def allows(self, keyword: str) -> bool:
        return bool(keyword) and keyword not in self.stopwords and keyword not in self._blocked


def rank_counts(counts: Mapping[str, int]) -> Keywords:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def extract_category_keywords(doc: Document, cfg: ExtractorConfig) -> Keywords:
    """Count whole curated labels (e.g. categories) across the configured fields."""
    counts: Counter = Counter()
    for name in cfg.fields:
        for value in doc.metadata.get(name, ()):
            label = normalize_label(value)
            if cfg.allows(label):
                counts[label] += 1
    return rank_counts(counts)[: cfg.max_keywords_per_doc]


def _token_counts(values: Iterable[str], cfg: ExtractorConfig) -> Counter:
    counts: Counter = Counter()
    for value in values:
        for tok in words(value):
            if len(tok) > 1 and cfg.allows(tok):
                counts[tok] += 1
    return counts


def extract_attribute_keywords(doc: Document, cfg: ExtractorConfig) -> Keywords:
    """Tokenize free-text attribute fields, drop stopwords, aggregate token counts."""
    values = [v for name in cfg.fields for v in doc.metadata.get(name, ())]
    return rank_counts(_token_counts(values, cfg))[: cfg.max_keywords_per_doc]


_STRATEGIES = {
    "category": extract_category_keywords,
    "attribute": extract_attribute_keywords,
}


@dataclass(frozen=True)
class KeywordTable:
    per_doc: Mapping[str, Tuple[Tuple[str, int], ...]] = field(default_factory=dict)

    def __getitem__(self, doc_id: str) -> Tuple[Tuple[str, int], ...]:
        return self.per_doc[doc_id]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self.per_doc

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for doc_id in sorted(self.per_doc):
                rec = {"doc_id": doc_id, "keywords": [[k, c] for k, c in self.per_doc[doc_id]]}
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "KeywordTable":
        per_doc = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    per_doc[rec["doc_id"]] = tuple((k, int(c)) for k, c in rec["keywords"])
        return cls(per_doc)


def extract_table(corpus: Corpus, cfg: ExtractorConfig) -> KeywordTable:
    """Keywords for every document.

    Documents whose metadata yields nothing fall back to their title tokens and,
    failing that, to the constant keyword ``"doc"`` so every document can
    contribute a label.
    """
    extract = _STRATEGIES[cfg.strategy]
    per_doc = {}
    for doc in corpus:
        kws = extract(doc, cfg)
        if not kws:
            kws = rank_counts(_token_counts([doc.title], cfg))[: cfg.max_keywords_per_doc]
        if not kws:
            kws = [(FALLBACK_KEYWORD, 1)]
        per_doc[doc.doc_id] = tuple(kws)
    return KeywordTable(per_doc)
