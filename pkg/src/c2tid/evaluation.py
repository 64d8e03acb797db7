"""Retrieval metrics and scheme-vs-scheme experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cluster import ClusterParams, ClusterTree, NumericPath, assign_numeric_paths, build_tree
from .corpus import Corpus, EmbeddingMatrix, embed_corpus
from .decode import DEFAULT_WEIGHTS, NgramScorerModel, Scorer, beam_search, train_ngram
from .labels import C2TId, LabelConfig, NodeLabel, node_labels, render_baseline_schemes, render_c2t_ids
from .priors import ExtractorConfig, KeywordTable, extract_table
from .smoothing import MockRewriter, Rewriter, Smoothed, smooth_ids
from .synth import QuerySet
from .trie import DocidTrie, Tokenizer, build_trie

ALL_SCHEMES = ("atomic", "codebook", "title", "c2t", "c2t_smoothed")
CUTOFFS = (5, 20)


class EvalError(ValueError):
    pass


def hits_at_k(ranked: Sequence[str], target: str, k: int) -> int:
    if k < 1:
        raise EvalError("k must be >= 1")
    return int(target in ranked[:k])


def mrr_at_k(ranked: Sequence[str], target: str, k: int) -> float:
    if k < 1:
        raise EvalError("k must be >= 1")
    for rank, doc_id in enumerate(ranked[:k], start=1):
        if doc_id == target:
            return 1.0 / rank
    return 0.0


def score_rankings(rankings: Sequence[Tuple[Sequence[str], str]]) -> Dict[str, float]:
    """Hits@5, Hits@20 and MRR@20 in percent over ``(ranked ids, target)`` pairs."""
    n = len(rankings)
    if n == 0:
        raise EvalError("no rankings to score")
    h5 = sum(hits_at_k(r, t, 5) for r, t in rankings)
    h20 = sum(hits_at_k(r, t, 20) for r, t in rankings)
    mrr = sum(mrr_at_k(r, t, 20) for r, t in rankings)
    return {"hits@5": 100.0 * h5 / n, "hits@20": 100.0 * h20 / n, "mrr@20": 100.0 * mrr / n}


@dataclass(frozen=True)
class ExperimentParams:
    seed: int = 7
    dim: int = 256
    cluster: ClusterParams = field(default_factory=ClusterParams)
    extractor: ExtractorConfig = field(default_factory=lambda: ExtractorConfig(fields=("categories", "tags")))
    label: LabelConfig = field(default_factory=LabelConfig)
    tokenizer_mode: str = "word"
    alpha: float = 0.1
    weights: Tuple[float, ...] = DEFAULT_WEIGHTS
    beam_width: int = 20
    length_norm: bool = False
    test_fraction: float = 0.2

    def __post_init__(self):
        # one seed drives embedding, clustering and the query split
        if self.cluster.seed != self.seed:
            object.__setattr__(self, "cluster", replace(self.cluster, seed=self.seed))


def split_queries(queries: QuerySet, seed: int, test_fraction: float = 0.2) -> Tuple[QuerySet, QuerySet]:
    """Seeded shuffle, then the first ``test_fraction`` of entries is held out."""
    if not 0 < test_fraction < 1:
        raise EvalError("test_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(queries))
    n_test = max(1, int(round(test_fraction * len(queries))))
    test_idx = sorted(order[:n_test].tolist())
    train_idx = sorted(order[n_test:].tolist())
    return (
        QuerySet(tuple(queries.entries[i] for i in train_idx), queries.mode),
        QuerySet(tuple(queries.entries[i] for i in test_idx), queries.mode),
    )


def document_pairs(corpus: Corpus) -> List[Tuple[str, str]]:
    """``(title + text, doc_id)`` pairs: the document-to-docid indexing signal."""
    return [(f"{d.title} {d.text}", d.doc_id) for d in corpus]


@dataclass
class Index:
    """All docid-construction artifacts for one corpus."""

    embeddings: EmbeddingMatrix
    tree: ClusterTree
    paths: Dict[str, NumericPath]
    keywords: KeywordTable
    labels: Dict[int, NodeLabel]
    c2t: Dict[str, C2TId]
    docids: Dict[str, Dict[str, str]]
    smoothed: Optional[Smoothed] = None


def build_index(
    corpus: Corpus,
    params: ExperimentParams,
    smooth: bool = True,
    rewriter: Optional[Rewriter] = None,
    embeddings: Optional[EmbeddingMatrix] = None,
) -> Index:
    emb = embeddings if embeddings is not None else embed_corpus(corpus, params.dim, params.seed)
    tree = build_tree(emb, corpus, params.cluster)
    paths = assign_numeric_paths(tree)
    table = extract_table(corpus, params.extractor)
    labels = node_labels(tree, table, params.label)
    c2t = render_c2t_ids(tree, paths, table, params.label, labels)
    base = render_baseline_schemes(corpus, paths, c2t)
    docids = {name: dict(base.scheme(name)) for name in ("atomic", "codebook", "title", "c2t")}
    smoothed = None
    if smooth:
        rankings = {nid: lab.ranking for nid, lab in labels.items()}
        smoothed = smooth_ids(c2t, tree, rewriter or MockRewriter(), rankings, params.label.intra_sep)
        docids["c2t_smoothed"] = smoothed.docids
    return Index(emb, tree, paths, table, labels, c2t, docids, smoothed)


def scheme_tokenizer(scheme: str, docids: Mapping[str, str], params: ExperimentParams) -> Tokenizer:
    """Each scheme tokenizes on its own separator."""
    mode = params.tokenizer_mode
    if scheme == "codebook":
        return Tokenizer.build(list(docids.values()), mode, ".")
    if scheme in ("title", "c2t_smoothed", "atomic"):
        return Tokenizer.build(list(docids.values()), "word", " ")
    return Tokenizer.build(list(docids.values()), mode, params.label.level_sep, params.label.intra_sep)


def decode_and_score(
    trie: DocidTrie, scorer: Scorer, queries: QuerySet, beam_width: int = 20, length_norm: bool = False
) -> Dict[str, float]:
    rankings = []
    for q, target in queries.entries:
        res = beam_search(q, scorer, trie, beam_width, length_norm=length_norm, validate=False)
        rankings.append((res.doc_ids, target))
    return score_rankings(rankings)


def report_config(params: ExperimentParams, n_docs: int) -> dict:
    return {
        "k": params.cluster.k, "c": params.cluster.c, "K": params.label.K, "dim": params.dim,
        "alpha": params.alpha, "weights": list(params.weights), "beam_width": params.beam_width,
        "tokenizer_mode": params.tokenizer_mode, "n_docs": n_docs, "test_fraction": params.test_fraction,
    }


def train_scheme(
    scheme: str,
    docids: Mapping[str, str],
    corpus: Corpus,
    train_queries: QuerySet,
    params: ExperimentParams,
    mode: str,
) -> Tuple[DocidTrie, NgramScorerModel]:
    tok = scheme_tokenizer(scheme, docids, params)
    trie = build_trie(docids, tok)
    pairs = document_pairs(corpus)
    if mode == "supervised":
        pairs += list(train_queries.entries)
    elif mode != "zero_shot":
        raise EvalError(f"unknown mode {mode!r}")
    return trie, train_ngram(pairs, docids, tok, params.alpha, weights=params.weights)


@dataclass
class EvalReport:
    schemes: Dict[str, Dict[str, float]]
    query_count: int
    seed: int
    mode: str
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "mode": self.mode,
            "query_count": self.query_count,
            "schemes": {s: {m: round(v, 1) for m, v in ms.items()} for s, ms in self.schemes.items()},
            "config": self.config,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def to_table(self) -> str:
        header = f"{'Method':<16}{'Hits@5':>8}{'Hits@20':>9}{'MRR@20':>8}"
        lines = [f"mode={self.mode} seed={self.seed} queries={self.query_count}", header, "-" * len(header)]
        for name, m in self.schemes.items():
            lines.append(f"{name:<16}{m['hits@5']:>8.1f}{m['hits@20']:>9.1f}{m['mrr@20']:>8.1f}")
        return "\n".join(lines) + "\n"


def run_experiment(
    corpus: Corpus,
    queries: QuerySet,
    schemes: Sequence[str] = ("atomic", "codebook", "title", "c2t"),
    params: ExperimentParams = ExperimentParams(),
    mode: str = "supervised",
    index: Optional[Index] = None,
    rewriter: Optional[Rewriter] = None,
) -> EvalReport:
    """Cluster once, then for each scheme: render, build trie, train, decode, score."""
    unknown = [s for s in schemes if s not in ALL_SCHEMES]
    if unknown:
        raise EvalError(f"unknown scheme {unknown[0]!r}")
    if mode not in ("supervised", "zero_shot"):
        raise EvalError(f"unknown mode {mode!r}")
    missing = [t for _, t in queries.entries if t not in corpus]
    if missing:
        raise EvalError(f"query target {missing[0]!r} not in corpus")
    if index is None:
        index = build_index(corpus, params, smooth="c2t_smoothed" in schemes, rewriter=rewriter)
    train_q, test_q = split_queries(queries, params.seed, params.test_fraction)
    results = {}
    for scheme in schemes:
        docids = index.docids[scheme]
        trie, model = train_scheme(scheme, docids, corpus, train_q, params, mode)
        results[scheme] = decode_and_score(trie, model, test_q, params.beam_width, params.length_norm)
    return EvalReport(results, len(test_q), params.seed, mode, report_config(params, len(corpus)))
