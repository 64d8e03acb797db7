"""Keyword labels for cluster nodes and the docid schemes built on them."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .cluster import ClusterTree, NumericPath
from .corpus import Corpus
from .priors import KeywordTable, rank_counts
from .textutil import words

SCHEMES = ("atomic", "codebook", "title", "c2t")

_KEYWORD_RE = re.compile(r"^[^\W]+$")


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class LabelConfig:
    K: int = 3
    intra_sep: str = "-"
    level_sep: str = "-"
    ancestor_dedup: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise LabelError(f"K must be >= 1, got {self.K}")
        for sep in (self.intra_sep, self.level_sep):
            if not sep or any(ch.isalnum() or ch in "_#" for ch in sep):
                raise LabelError(f"separator {sep!r} must be non-empty punctuation other than '_' or '#'")


@dataclass(frozen=True)
class NodeLabel:
    node_id: int
    ranked_keywords: Tuple[str, ...]
    rendered: str
    ranking: Tuple[str, ...] = ()


@dataclass(frozen=True)
class C2TId:
    doc_id: str
    numeric_path: NumericPath
    segments: Tuple[str, ...]
    full: str
    disambiguator: Optional[int] = None
    node_ids: Tuple[int, ...] = ()


@dataclass(frozen=True)
class DocidSchemeSet:
    atomic: Mapping[str, str]
    codebook: Mapping[str, str]
    title: Mapping[str, str]
    c2t: Mapping[str, str]

    def scheme(self, name: str) -> Mapping[str, str]:
        if name not in SCHEMES:
            raise LabelError(f"unknown scheme {name!r}")
        return getattr(self, name)


def aggregate_node_keywords(tree: ClusterTree, table: KeywordTable) -> Dict[int, Counter]:
    """Keyword counts summed over every document in each node's subtree."""
    out: Dict[int, Counter] = {}

    def visit(node_id: int) -> Counter:
        node = tree.nodes[node_id]
        total: Counter = Counter()
        if node.is_leaf:
            for doc_id in node.members:
                if doc_id not in table:
                    raise LabelError(f"no keywords for doc_id {doc_id!r}")
                for kw, cnt in table[doc_id]:
                    total[kw] += cnt
        else:
            for child in node.children:
                total.update(visit(child))
        out[node_id] = total
        return total

    visit(tree.root)
    return out


def select_top_k(counts: Mapping[str, int], K: int) -> List[str]:
    if K < 1:
        raise LabelError(f"K must be >= 1, got {K}")
    if not counts:
        raise LabelError("cannot select keywords from empty counts")
    return [kw for kw, _ in rank_counts(counts)[:K]]


def _pick(ranking: Sequence[str], K: int, exclude: set) -> List[str]:
    picked = [kw for kw in ranking if kw not in exclude][:K]
    return picked or list(ranking[:K])


def node_labels(tree: ClusterTree, table: KeywordTable, cfg: LabelConfig) -> Dict[int, NodeLabel]:
    """Top-K label for every non-root node.

    Siblings always receive distinct rendered labels: a label that repeats an
    earlier sibling's swaps its last keyword for the next-ranked alternative,
    and as a last resort gains the node's numeric label as an extra token.
    """
    counts = aggregate_node_keywords(tree, table)
    labels: Dict[int, NodeLabel] = {}

    def visit(node_id: int, used: set) -> None:
        node = tree.nodes[node_id]
        taken = set()
        for child_id in node.children:
            ranking = tuple(kw for kw, _ in rank_counts(counts[child_id]))
            if not ranking:
                raise LabelError(f"node {child_id} has no keywords")
            exclude = used if cfg.ancestor_dedup else set()
            chosen = _pick(ranking, cfg.K, exclude)
            rendered = cfg.intra_sep.join(chosen)
            if rendered in taken:
                head = chosen[:-1]
                for alt in ranking:
                    if alt in chosen or alt in exclude:
                        continue
                    cand = head + [alt]
                    if cfg.intra_sep.join(cand) not in taken:
                        chosen = cand
                        break
                else:
                    chosen = chosen + [str(tree.nodes[child_id].label)]
                rendered = cfg.intra_sep.join(chosen)
            taken.add(rendered)
            labels[child_id] = NodeLabel(child_id, tuple(chosen), rendered, ranking)
            visit(child_id, used | set(chosen))

    visit(tree.root, set())
    return labels


def document_keywords(
    doc_id: str, table: KeywordTable, cfg: LabelConfig, used: set = frozenset()
) -> List[str]:
    counts = dict(table[doc_id])
    if not counts:
        raise LabelError(f"no keywords for doc_id {doc_id!r}")
    ranking = [kw for kw, _ in rank_counts(counts)]
    return _pick(ranking, cfg.K, set(used) if cfg.ancestor_dedup else set())


def _disambiguate(base: Mapping[str, str]) -> Dict[str, Optional[int]]:
    """Suffix numbers for repeated strings: first occupant (in doc_id order) gets none."""
    seen: Dict[str, int] = {}
    out: Dict[str, Optional[int]] = {}
    for doc_id in sorted(base):
        s = base[doc_id]
        n = seen.get(s, 0)
        out[doc_id] = n or None
        seen[s] = n + 1
    return out


def render_c2t_ids(
    tree: ClusterTree,
    paths: Mapping[str, NumericPath],
    table: KeywordTable,
    cfg: LabelConfig = LabelConfig(),
    labels: Optional[Mapping[int, NodeLabel]] = None,
) -> Dict[str, C2TId]:
    """Replace every numeric label with keyword text and join across levels.

    Path positions ``0..m-1`` take the label of the node they route into; the
    final position (the within-leaf index) takes the document's own top-K
    keywords. Residual duplicates get ``#n`` suffixes in doc_id order.
    """
    if labels is None:
        labels = node_labels(tree, table, cfg)
    pending = {}
    for doc_id in sorted(paths):
        path = paths[doc_id]
        route = tree.node_path(path.labels[:-1])
        segs, used = [], set()
        for nid in route:
            lab = labels[nid]
            segs.append(lab.rendered)
            used.update(lab.ranked_keywords)
        segs.append(cfg.intra_sep.join(document_keywords(doc_id, table, cfg, used)))
        pending[doc_id] = (path, tuple(segs), tuple(route))
    bases = {d: cfg.level_sep.join(segs) for d, (_, segs, _) in pending.items()}
    suffixes = _disambiguate(bases)
    out = {}
    for doc_id, (path, segs, route) in pending.items():
        n = suffixes[doc_id]
        full = bases[doc_id] + (f"#{n}" if n else "")
        out[doc_id] = C2TId(doc_id, path, segs, full, n, route)
    return out


def normalize_title(title: str) -> str:
    return " ".join(words(title))


def render_baseline_schemes(
    corpus: Corpus, paths: Mapping[str, NumericPath], c2t: Optional[Mapping[str, C2TId]] = None
) -> DocidSchemeSet:
    """Atomic, codebook and title docids (plus c2t strings when provided)."""
    missing = [d for d in corpus.doc_ids if d not in paths]
    if missing:
        raise LabelError(f"no numeric path for doc_id {missing[0]!r}")
    atomic = {d: str(i) for i, d in enumerate(corpus.doc_ids)}
    codebook = {d: paths[d].dotted() for d in corpus.doc_ids}
    titles = {}
    for doc in corpus:
        titles[doc.doc_id] = normalize_title(doc.title) or normalize_title(doc.doc_id) or "untitled"
    suffixes = _disambiguate(titles)
    title = {d: t + (f"#{suffixes[d]}" if suffixes[d] else "") for d, t in titles.items()}
    c2t_map = {d: c.full for d, c in c2t.items()} if c2t is not None else {}
    return DocidSchemeSet(atomic=atomic, codebook=codebook, title=title, c2t=c2t_map)


def write_docid_tsv(docids: Mapping[str, str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(docids):
            fh.write(f"{doc_id}\t{docids[doc_id]}\n")


def read_docid_tsv(path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc_id, docid = line.rstrip("\n").split("\t")
                out[doc_id] = docid
    return out
