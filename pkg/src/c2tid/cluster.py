"""Hierarchical k-means tree and numeric routing paths (semantic codebook docids)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Hashable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .corpus import Corpus, EmbeddingMatrix


class ClusterError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterParams:
    k: int = 30
    c: int = 30
    seed: int = 0
    max_iters: int = 50

    def __post_init__(self):
        if self.k < 2:
            raise ClusterError(f"k must be >= 2, got {self.k}")
        if self.c < 1:
            raise ClusterError(f"c must be >= 1, got {self.c}")
        if self.max_iters < 1:
            raise ClusterError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.seed < 0:
            raise ClusterError(f"seed must be non-negative, got {self.seed}")


# ---------------------------------------------------------------------------
# single-level k-means


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = ((X - X[centers[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            break
        nxt = int(rng.choice(n, p=d2 / total))
        centers.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[centers].copy()


def _assign(X: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, float]:
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum: ties go to the lower cluster index
    labels = d2.argmin(axis=1)
    return labels, float(d2[np.arange(X.shape[0]), labels].sum())


def lloyd(
    X: np.ndarray, k: int, seed, max_iters: int = 50
) -> Tuple[np.ndarray, List[float]]:
    """Seeded k-means++ followed by Lloyd iterations.

    Returns the raw cluster index per row and the within-cluster SSE recorded
    after every assignment step. An emptied cluster keeps its previous
    centroid, which keeps the SSE trace non-increasing.
    """
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(X, k, rng)
    labels, sse = _assign(X, centroids)
    history = [sse]
    for _ in range(max_iters):
        for j in range(centroids.shape[0]):
            mask = labels == j
            if mask.any():
                centroids[j] = X[mask].mean(axis=0)
        new_labels, sse = _assign(X, centroids)
        history.append(sse)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, history


def kmeans(
    points: Sequence[Tuple[Hashable, Sequence[float]]],
    k: int,
    seed: int | Sequence[int] = 0,
    max_iters: int = 50,
) -> Dict[Hashable, int]:
    """Cluster ``(id, vector)`` points into at most ``k`` groups.

    Points are processed in ascending id order, so the result does not depend
    on input order. Empty clusters are dropped and the survivors relabeled
    ``0..n-1`` by their smallest member id. When there are no more than ``k``
    distinct vectors, each distinct vector forms its own cluster.
    """
    if k < 1:
        raise ClusterError(f"k must be >= 1, got {k}")
    if not points:
        raise ClusterError("kmeans needs at least one point")
    ordered = sorted(points, key=lambda p: p[0])
    ids = [p[0] for p in ordered]
    if len(set(ids)) != len(ids):
        raise ClusterError("point ids must be unique")
    X = np.asarray([p[1] for p in ordered], dtype=np.float64)
    if X.ndim != 2:
        raise ClusterError("all vectors must share one dimension")

    _, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    if k == 1:
        raw = np.zeros(len(ids), dtype=int)
    elif inverse.max() + 1 <= k:
        raw = inverse
    else:
        raw, _ = lloyd(X, k, seed, max_iters)
    return _relabel(ids, raw)


def _relabel(ids: Sequence[Hashable], raw: np.ndarray) -> Dict[Hashable, int]:
    # ids are sorted, so the first occurrence of a raw label is its smallest member
    mapping: Dict[int, int] = {}
    out = {}
    for pid, r in zip(ids, raw.tolist()):
        if r not in mapping:
            mapping[r] = len(mapping)
        out[pid] = mapping[r]
    return out


def within_cluster_sse(points: Mapping[Hashable, Sequence[float]], assignment: Mapping[Hashable, int]) -> float:
    groups: Dict[int, List[np.ndarray]] = {}
    for pid, lab in assignment.items():
        groups.setdefault(lab, []).append(np.asarray(points[pid], dtype=float))
    total = 0.0
    for rows in groups.values():
        arr = np.vstack(rows)
        total += float(((arr - arr.mean(axis=0)) ** 2).sum())
    return total


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class ClusterNode:
    node_id: int
    parent: Optional[int]
    depth: int
    label: int
    members: Tuple[str, ...]
    children: Tuple[int, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class ClusterTree:
    nodes: Mapping[int, ClusterNode]
    root: int = 0

    def __post_init__(self):
        leaf_of = {}
        for node in self.nodes.values():
            if node.is_leaf:
                for d in node.members:
                    leaf_of[d] = node.node_id
        object.__setattr__(self, "_leaf_of", leaf_of)

    def leaf_of(self, doc_id: str) -> ClusterNode:
        return self.nodes[self._leaf_of[doc_id]]

    def leaves(self) -> List[ClusterNode]:
        return [n for n in self.nodes.values() if n.is_leaf]

    def node_path(self, labels: Sequence[int]) -> List[int]:
        """Node ids reached by following sibling ``labels`` down from the root."""
        cur = self.nodes[self.root]
        out = []
        for lab in labels:
            cur = self.nodes[cur.children[lab]]
            out.append(cur.node_id)
        return out

    def ancestors(self, node_id: int) -> List[int]:
        """Strict ancestors of ``node_id``, root first."""
        chain = []
        parent = self.nodes[node_id].parent
        while parent is not None:
            chain.append(parent)
            parent = self.nodes[parent].parent
        return chain[::-1]

    def to_json(self) -> str:
        payload = {
            "root": self.root,
            "nodes": [
                {
                    "node_id": n.node_id,
                    "parent": n.parent,
                    "depth": n.depth,
                    "label": n.label,
                    "children": list(n.children),
                    "members": list(n.members),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.node_id)
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ClusterTree":
        payload = json.loads(text)
        nodes = {
            rec["node_id"]: ClusterNode(
                node_id=rec["node_id"],
                parent=rec["parent"],
                depth=rec["depth"],
                label=rec["label"],
                members=tuple(rec["members"]),
                children=tuple(rec["children"]),
            )
            for rec in payload["nodes"]
        }
        return cls(nodes=nodes, root=payload["root"])


def _round_robin(ids: Sequence[str], parts: int) -> Dict[str, int]:
    return {d: i % parts for i, d in enumerate(sorted(ids))}


def build_tree(emb: EmbeddingMatrix, corpus: Corpus, params: ClusterParams) -> ClusterTree:
    """Recursive k-means until every leaf holds at most ``params.c`` documents.

    Each split is seeded from ``(params.seed, *labels-of-the-node)``, so a
    subtree's result depends only on its own members and position, never on
    traversal order. A split that collapses to one cluster falls back to a
    round-robin partition by ascending doc_id.
    """
    if len(corpus) == 0:
        raise ClusterError("cannot cluster an empty corpus")
    missing = [d for d in corpus.doc_ids if d not in emb]
    if missing:
        raise ClusterError(f"no embedding row for doc_id {missing[0]!r}")

    # (parent, depth, label, members, children)
    raw: List[list] = []

    def grow(members: List[str], parent: Optional[int], depth: int, label: int, route: Tuple[int, ...]) -> int:
        node_id = len(raw)
        raw.append([parent, depth, label, tuple(sorted(members)), []])
        if len(members) <= params.c:
            return node_id
        ordered = sorted(members)
        X = emb.take(ordered)
        assignment = kmeans(list(zip(ordered, X)), params.k, [params.seed, *route], params.max_iters)
        if max(assignment.values()) == 0:
            parts = min(params.k, max(2, math.ceil(len(ordered) / params.c)))
            assignment = _round_robin(ordered, parts)
        groups: Dict[int, List[str]] = {}
        for d in ordered:
            groups.setdefault(assignment[d], []).append(d)
        for lab in sorted(groups):
            child = grow(groups[lab], node_id, depth + 1, lab, route + (lab,))
            raw[node_id][4].append(child)
        return node_id

    grow(list(corpus.doc_ids), None, 0, 0, ())
    nodes = {
        i: ClusterNode(i, p, dep, lab, mem, tuple(ch)) for i, (p, dep, lab, mem, ch) in enumerate(raw)
    }
    return ClusterTree(nodes=nodes, root=0)


@dataclass(frozen=True)
class NumericPath:
    doc_id: str
    labels: Tuple[int, ...]

    def dotted(self) -> str:
        return ".".join(str(x) for x in self.labels)


def assign_numeric_paths(tree: ClusterTree) -> Dict[str, NumericPath]:
    """Sibling labels from root to leaf, then the document's rank inside its leaf."""
    paths: Dict[str, NumericPath] = {}

    def walk(node_id: int, prefix: Tuple[int, ...]) -> None:
        node = tree.nodes[node_id]
        if node.is_leaf:
            for idx, doc_id in enumerate(sorted(node.members)):
                paths[doc_id] = NumericPath(doc_id, prefix + (idx,))
            return
        for child_id in node.children:
            walk(child_id, prefix + (tree.nodes[child_id].label,))

    walk(tree.root, ())
    return dict(sorted(paths.items()))


def validate_tree(tree: ClusterTree, params: ClusterParams, doc_ids: Sequence[str] | None = None) -> List[str]:
    """Return a list of invariant violations (empty when the tree is valid)."""
    problems = []
    seen_leaf_docs: Dict[str, int] = {}
    visited = set()
    stack = [tree.root]
    if tree.nodes[tree.root].parent is not None:
        problems.append("root has a parent")
    while stack:
        nid = stack.pop()
        if nid in visited:
            problems.append(f"node {nid} reached twice")
            continue
        visited.add(nid)
        node = tree.nodes[nid]
        if node.is_leaf:
            if len(node.members) > params.c:
                problems.append(f"leaf {nid} has {len(node.members)} > c members")
            for d in node.members:
                if d in seen_leaf_docs:
                    problems.append(f"doc {d} in leaves {seen_leaf_docs[d]} and {nid}")
                seen_leaf_docs[d] = nid
            continue
        if not 2 <= len(node.children) <= params.k:
            problems.append(f"node {nid} has {len(node.children)} children")
        labels = [tree.nodes[c].label for c in node.children]
        if labels != list(range(len(labels))):
            problems.append(f"node {nid} children labels {labels}")
        union: List[str] = []
        for c in node.children:
            if tree.nodes[c].parent != nid:
                problems.append(f"node {c} parent mismatch")
            union.extend(tree.nodes[c].members)
        if len(union) != len(set(union)) or set(union) != set(node.members):
            problems.append(f"node {nid} children do not partition its members")
        stack.extend(node.children)
    if visited != set(tree.nodes):
        problems.append("tree has unreachable nodes")
    if doc_ids is not None and set(seen_leaf_docs) != set(doc_ids):
        problems.append("leaves do not cover the corpus exactly")
    return problems


def write_paths_tsv(paths: Mapping[str, NumericPath], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(paths):
            fh.write(f"{doc_id}\t{paths[doc_id].dotted()}\n")


def read_paths_tsv(path) -> Dict[str, NumericPath]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc_id, dotted = line.rstrip("\n").split("\t")
            out[doc_id] = NumericPath(doc_id, tuple(int(x) for x in dotted.split(".")))
    return out
