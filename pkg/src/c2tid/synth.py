"""Seeded synthetic corpora with a two-level topic hierarchy.

Each document picks a (topic, subtopic) pair and a few facet words from the
subtopic's vocabulary. Its text, title, metadata and queries are all sampled
from the same per-document word distribution, so documents that share a
subtopic overlap more than documents that do not.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .corpus import Corpus, iter_documents

_ONSETS = ["b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "ch", "dr", "gl", "kr", "pl", "sh", "st", "tr", "th"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ea", "io", "ou"]
_CODAS = ["", "", "n", "r", "s", "l", "x", "m", "nd", "rk"]

SUBTOPICS_PER_TOPIC = 4
FACETS_PER_DOC = 3
TEXT_LEN = 40
GENERIC_CATEGORIES = ("All pages", "Uncategorized")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class QuerySet:
    entries: Tuple[Tuple[str, str], ...]
    mode: str = "supervised"

    def __len__(self) -> int:
        return len(self.entries)

    def to_jsonl(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for q, target in self.entries:
                fh.write(json.dumps({"query": q, "target_doc_id": target}, ensure_ascii=False) + "\n")

    @classmethod
    def from_jsonl(cls, path, corpus: Corpus | None = None, mode: str = "supervised") -> "QuerySet":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    q, target = str(rec["query"]), str(rec["target_doc_id"])
                except (json.JSONDecodeError, KeyError, TypeError):
                    raise SynthError(f"{path}:{lineno}: expected {{'query', 'target_doc_id'}}") from None
                if corpus is not None and target not in corpus:
                    raise SynthError(f"{path}:{lineno}: unknown target doc_id {target!r}")
                entries.append((q, target))
        return cls(tuple(entries), mode)


def _make_vocab(rng: np.random.Generator, size: int) -> List[str]:
    vocab, seen = [], set()
    attempts = 0
    while len(vocab) < size:
        attempts += 1
        if attempts > size * 200:
            raise SynthError("could not generate enough distinct words")
        n_syll = int(rng.integers(2, 4))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n_syll)
        ) + _CODAS[rng.integers(len(_CODAS))]
        if w not in seen and w not in ("for", "with", "doc"):
            seen.add(w)
            vocab.append(w)
    return vocab


def synth_corpus(
    seed: int = 7,
    n_docs: int = 500,
    n_topics: int = 10,
    vocab_size: int = 2000,
    queries_per_doc: int = 5,
    facet_mass: float = 0.10,
) -> Tuple[Corpus, QuerySet]:
    if n_topics < 2 or n_docs < n_topics:
        raise SynthError("need n_docs >= n_topics >= 2")
    if queries_per_doc < 0:
        raise SynthError("queries_per_doc must be non-negative")
    n_sub = n_topics * SUBTOPICS_PER_TOPIC
    n_labels = n_topics + n_sub
    n_background = max(10, vocab_size // 20)
    pool = (vocab_size - n_labels - n_background) // (n_topics + n_sub)
    if pool < 2 * FACETS_PER_DOC:
        raise SynthError(f"vocab_size {vocab_size} too small for {n_topics} topics")

    rng = np.random.default_rng(seed)
    vocab = _make_vocab(rng, vocab_size)
    it = iter(vocab)
    topic_label = [next(it) for _ in range(n_topics)]
    sub_label = [[next(it) for _ in range(SUBTOPICS_PER_TOPIC)] for _ in range(n_topics)]
    background = [next(it) for _ in range(n_background)]
    topic_pool = [[next(it) for _ in range(pool)] for _ in range(n_topics)]
    sub_pool = [[[next(it) for _ in range(pool)] for _ in range(SUBTOPICS_PER_TOPIC)] for _ in range(n_topics)]
    # Zipf-like weights so some subtopic words recur across documents
    zipf = 1.0 / np.arange(1, pool + 1)
    zipf /= zipf.sum()

    records, queries = [], []
    width = len(str(n_docs - 1))
    for i in range(n_docs):
        t = int(rng.integers(n_topics))
        s = int(rng.integers(SUBTOPICS_PER_TOPIC))
        spool = sub_pool[t][s]
        facets = [spool[j] for j in rng.choice(pool, FACETS_PER_DOC, replace=False, p=zipf)]

        # (word list, total mass) components of the document's distribution
        rest = 1.0 - facet_mass
        parts = [
            ([topic_label[t], sub_label[t][s]], 0.15 * rest),
            (topic_pool[t], 0.35 * rest),
            (spool, 0.35 * rest),
            (facets, facet_mass),
            (background, 0.15 * rest),
        ]
        words = [w for ws, _ in parts for w in ws]
        probs = np.concatenate([np.full(len(ws), m / len(ws)) for ws, m in parts])
        topical = len(words) - len(background)
        q_probs = probs[:topical] / probs[:topical].sum()

        text = " ".join(words[j] for j in rng.choice(len(words), TEXT_LEN, p=probs))
        title_words = [spool[j] for j in rng.choice(pool, 2, replace=False, p=zipf)]
        title = " ".join(w.capitalize() for w in title_words + [sub_label[t][s]])
        categories = [topic_label[t].capitalize(), sub_label[t][s].capitalize()]
        categories += [f.capitalize() for f in facets]
        categories.append(GENERIC_CATEGORIES[0])
        if rng.random() < 0.2:
            categories.append(GENERIC_CATEGORIES[1])
        if rng.random() < 0.3:
            ot, os_ = int(rng.integers(n_topics)), int(rng.integers(SUBTOPICS_PER_TOPIC))
            categories.append(sub_label[ot][os_].capitalize())
        tags = list(facets)
        if rng.random() < 0.3:
            tags.append(topic_pool[t][int(rng.integers(pool))])

        doc_id = f"d{i:0{width}d}"
        records.append({"doc_id": doc_id, "title": title, "text": text,
                        "metadata": {"categories": categories, "tags": tags}})
        for _ in range(queries_per_doc):
            n_words = int(rng.integers(3, 6))
            q = [facets[int(rng.integers(FACETS_PER_DOC))]]
            q += [words[j] for j in rng.choice(topical, n_words - 1, p=q_probs)]
            rng.shuffle(q)
            queries.append((" ".join(q), doc_id))

    return iter_documents(records), QuerySet(tuple(queries), "supervised")
