"""Trie-constrained beam search with pluggable next-token scorers."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

from .textutil import words
from .trie import EOS, DocidTrie, Tokenizer

CONTEXT = 2
# mixing weights for context lengths 2, 1, 0
DEFAULT_WEIGHTS = (1.0, 0.0, 0.0)


class DecodeError(ValueError):
    pass


class Scorer(Protocol):
    def score_next(self, query: str, prefix: Sequence[int], allowed: FrozenSet[int]) -> Dict[int, float]:
        """Log-probabilities over exactly ``allowed``, normalized over that set."""


def logsumexp(values: Iterable[float]) -> float:
    vals = list(values)
    top = max(vals)
    if top == -math.inf:
        return top
    return top + math.log(sum(math.exp(v - top) for v in vals))


def check_scores(scores: Mapping[int, float], allowed: FrozenSet[int], tol: float = 1e-6) -> None:
    if set(scores) != set(allowed):
        raise DecodeError("scorer returned keys that differ from the allowed set")
    if not all(math.isfinite(v) for v in scores.values()):
        raise DecodeError("scorer returned a non-finite log-probability")
    if abs(logsumexp(scores.values())) > tol:
        raise DecodeError("scorer distribution is not normalized over the allowed set")


class UniformScorer:
    def score_next(self, query, prefix, allowed):
        if not allowed:
            raise DecodeError("uniform scorer needs a non-empty allowed set")
        lp = -math.log(len(allowed))
        return {t: lp for t in allowed}


def uniform_scorer() -> UniformScorer:
    return UniformScorer()


def query_terms(text: str) -> List[str]:
    """Distinct lowercase words of a query, in first-seen order."""
    return list(dict.fromkeys(words(text)))


class NgramScorerModel:
    """Bag-of-words query terms crossed with docid context suffixes.

    ``counts[context][term][next_token]`` is how often ``next_token`` followed
    ``context`` in a docid whose paired query contained ``term``; every suffix
    of the prefix up to ``CONTEXT`` tokens long is counted.

    For one context the query terms are combined naive-Bayes style: a token's
    score is its smoothed share of the context's term mass times, for every
    query term, the smoothed rate of that term among the token's counts. With
    a single term and ``alpha=0`` this is just the empirical conditional
    frequency. Context lengths are mixed with ``weights`` (longest first);
    the default uses only the longest available context.
    """

    def __init__(self, alpha: float = 0.1, weights: Sequence[float] = DEFAULT_WEIGHTS):
        if alpha < 0:
            raise DecodeError("alpha must be non-negative")
        if len(weights) != CONTEXT + 1 or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise DecodeError(f"weights must be {CONTEXT + 1} non-negative numbers with a positive sum")
        self.alpha = alpha
        self.weights = tuple(float(w) for w in weights)
        self.counts: Dict[Tuple[int, ...], Dict[str, Dict[int, int]]] = defaultdict(
            lambda: defaultdict(lambda: defaultdict(int))
        )
        self._totals: Dict[Tuple[int, ...], Tuple[Dict[int, int], int]] = {}

    @staticmethod
    def contexts(prefix: Sequence[int]) -> List[Tuple[int, ...]]:
        """Suffixes of ``prefix`` of length CONTEXT, ..., 1, 0 (clipped to the prefix)."""
        return [tuple(prefix[len(prefix) - min(n, len(prefix)):]) for n in range(CONTEXT, -1, -1)]

    def add(self, query: str, tokens: Sequence[int]) -> None:
        terms = query_terms(query)
        for pos, nxt in enumerate(tokens):
            for ctx in set(self.contexts(tokens[:pos])):
                table = self.counts[ctx]
                for term in terms:
                    table[term][nxt] += 1
        self._totals.clear()

    def count(self, term: str, context: Sequence[int], token: int) -> int:
        ctx = tuple(context)
        if ctx not in self.counts or term not in self.counts[ctx]:
            return 0
        return self.counts[ctx][term].get(token, 0)

    def terms(self) -> set:
        return {t for table in self.counts.values() for t in table}

    def totals(self, context: Tuple[int, ...]) -> Tuple[Dict[int, int], int]:
        """Per-token term mass under ``context`` and the number of distinct terms seen there."""
        if context not in self._totals:
            mass: Dict[int, int] = defaultdict(int)
            table = self.counts.get(context, {})
            for row in table.values():
                for t, c in row.items():
                    mass[t] += c
            self._totals[context] = (dict(mass), len(table))
        return self._totals[context]

    def context_scores(self, terms: Sequence[str], context: Tuple[int, ...], allowed) -> Optional[Dict[int, float]]:
        """Normalized log-probabilities under one context, or None if it was never seen."""
        mass, n_terms = self.totals(context)
        if n_terms == 0:
            return None
        denom = sum(mass.get(t, 0) for t in allowed) + self.alpha * len(allowed)
        if denom <= 0:
            return None
        table = self.counts.get(context, {})
        a = self.alpha
        raw = {}
        for t in allowed:
            m = mass.get(t, 0)
            if m + a <= 0:
                raw[t] = -math.inf
                continue
            s = math.log((m + a) / denom)
            for term in terms:
                c = table[term].get(t, 0) if term in table else 0
                if c + a <= 0:
                    s = -math.inf
                    break
                s += math.log((c + a) / (m + a * n_terms))
            raw[t] = s
        z = logsumexp(raw.values())
        if z == -math.inf:
            return None
        return {t: v - z for t, v in raw.items()}

    def score_next(self, query, prefix, allowed):
        if not allowed:
            raise DecodeError("no allowed tokens to score")
        terms = query_terms(query)
        parts = []
        for weight, ctx in zip(self.weights, self.contexts(prefix)):
            if weight == 0:
                continue
            scores = self.context_scores(terms, ctx, allowed)
            if scores is not None:
                parts.append((weight, scores))
        if not parts:
            lp = -math.log(len(allowed))
            return {t: lp for t in allowed}
        if len(parts) == 1:
            return parts[0][1]
        used = math.log(sum(w for w, _ in parts))
        # mix in log space: tiny per-context probabilities must not underflow
        return {
            t: logsumexp([math.log(w) + sc[t] for w, sc in parts]) - used
            for t in allowed
        }

    def to_json(self) -> str:
        rows = []
        for ctx in sorted(self.counts):
            for term in sorted(self.counts[ctx]):
                nxt = self.counts[ctx][term]
                rows.append([list(ctx), term, sorted(nxt.items())])
        return json.dumps({"alpha": self.alpha, "weights": list(self.weights), "context": CONTEXT, "counts": rows})

    @classmethod
    def from_json(cls, text: str) -> "NgramScorerModel":
        payload = json.loads(text)
        model = cls(alpha=payload["alpha"], weights=payload["weights"])
        for ctx, term, nxt in payload["counts"]:
            row = model.counts[tuple(ctx)][term]
            for t, c in nxt:
                row[int(t)] = int(c)
        return model


def train_ngram(
    pairs: Iterable[Tuple[str, str]],
    docids: Mapping[str, str],
    tok: Tokenizer,
    alpha: float = 0.1,
    model: Optional[NgramScorerModel] = None,
    weights: Sequence[float] = DEFAULT_WEIGHTS,
) -> NgramScorerModel:
    """Count (query term, context, next token) triples over ``(query, doc_id)`` pairs.

    Passing ``(document text, doc_id)`` pairs only gives the zero-shot regime.
    """
    model = model if model is not None else NgramScorerModel(alpha, weights)
    cache: Dict[str, List[int]] = {}
    for query, doc_id in pairs:
        if doc_id not in docids:
            raise DecodeError(f"no docid for doc_id {doc_id!r}")
        if doc_id not in cache:
            cache[doc_id] = tok.tokenize(docids[doc_id])
        model.add(query, cache[doc_id])
    return model


@dataclass(frozen=True)
class DecodeResult:
    query: str
    ranked: Tuple[Tuple[str, float], ...]
    beam_width: int

    @property
    def doc_ids(self) -> List[str]:
        return [d for d, _ in self.ranked]

    def to_record(self) -> dict:
        return {"query": self.query, "ranked": [[d, lp] for d, lp in self.ranked]}


def beam_search(
    query: str,
    scorer: Scorer,
    trie: DocidTrie,
    beam_width: int = 20,
    max_len: Optional[int] = None,
    length_norm: bool = False,
    validate: bool = True,
) -> DecodeResult:
    """Length-wise beam search restricted to trie continuations.

    Each step expands every live beam over ``allowed_next`` and keeps the
    ``beam_width`` best candidates by cumulative log-probability (ties: lower
    token id, then earlier insertion). Candidates ending in EOS leave the beam
    and compete in the final ranking.
    """
    if beam_width < 1:
        raise DecodeError("beam_width must be >= 1")
    if not trie.terminal:
        raise DecodeError("cannot decode over an empty trie")
    if max_len is None:
        max_len = trie.max_depth
    if max_len < trie.max_depth:
        raise DecodeError(f"max_len {max_len} shorter than longest docid ({trie.max_depth} tokens)")

    # (score, tokens, trie node)
    live: List[Tuple[float, Tuple[int, ...], int]] = [(0.0, (), trie.root)]
    finished: List[Tuple[float, Tuple[int, ...], str]] = []
    for _ in range(max_len):
        if not live:
            break
        cands = []
        order = 0
        for score, seq, node in live:
            allowed = frozenset(trie.children(node))
            if not allowed:
                continue
            lps = scorer.score_next(query, seq, allowed)
            if validate:
                check_scores(lps, allowed)
            for t in sorted(allowed):
                cands.append((score + lps[t], t, order, seq + (t,), trie.step(node, t)))
                order += 1
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        live = []
        for score, t, _, seq, node in cands[:beam_width]:
            if t == EOS:
                finished.append((score, seq, trie.terminal[node]))
            else:
                live.append((score, seq, node))

    def key(item):
        score, seq, _ = item
        return (-(score / len(seq)) if length_norm else -score, seq)

    finished.sort(key=key)
    ranked = tuple((doc_id, score) for score, _, doc_id in finished[:beam_width])
    return DecodeResult(query=query, ranked=ranked, beam_width=beam_width)


def enumerate_scores(query: str, scorer: Scorer, trie: DocidTrie) -> List[Tuple[str, float]]:
    """Score every docid in the trie exhaustively; same ordering as beam_search."""
    out = []
    for doc_id, seq in trie.sequences.items():
        total = 0.0
        for i, t in enumerate(seq):
            allowed = trie.allowed_next(seq[:i])
            total += scorer.score_next(query, seq[:i], allowed)[t]
        out.append((total, seq, doc_id))
    out.sort(key=lambda x: (-x[0], x[1]))
    return [(d, s) for s, _, d in out]
