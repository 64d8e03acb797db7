"""Two-level phrase smoothing of C2T docids and a trie topology check."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Protocol, Sequence, Tuple

from .cluster import ClusterTree
from .labels import C2TId
from .trie import DocidTrie

_FORBIDDEN = set(" \t\n-#")


class SmoothingError(ValueError):
    pass


class Rewriter(Protocol):
    def rewrite_phrase(self, keywords: Sequence[str], node_id: Optional[int] = None) -> List[str]:
        ...

    def connective(self, parent_phrase: str, child_phrase: str, node_id: Optional[int] = None) -> str:
        ...


class MockRewriter:
    """Head keyword moves to the end behind "for"; levels are joined by "with".

    ``[phone, battery, charger]`` becomes ``battery charger for phone``.
    """

    def rewrite_phrase(self, keywords, node_id=None):
        kws = list(keywords)
        if len(kws) < 2:
            return kws
        return kws[1:] + ["for", kws[0]]

    def connective(self, parent_phrase, child_phrase, node_id=None):
        return "with"


class IdentityRewriter:
    def __init__(self, connective: str = "then"):
        self._connective = connective

    def rewrite_phrase(self, keywords, node_id=None):
        return list(keywords)

    def connective(self, parent_phrase, child_phrase, node_id=None):
        return self._connective


class ReplayRewriter:
    """Rewrites replayed from a JSONL file of ``{"node_id", "phrase", "connective"}``.

    A record's connective links that node to its children. Nodes without a
    record, and document-level segments, go to ``fallback``.
    """

    def __init__(self, records: Mapping[int, Tuple[str, str]], fallback: Optional[Rewriter] = None):
        self.records = dict(records)
        self.fallback = fallback or MockRewriter()

    @classmethod
    def from_jsonl(cls, path, fallback: Optional[Rewriter] = None) -> "ReplayRewriter":
        records = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    records[int(rec["node_id"])] = (str(rec["phrase"]), str(rec.get("connective", "")))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    raise SmoothingError(f"{path}:{lineno}: malformed replay record") from None
        return cls(records, fallback)

    def rewrite_phrase(self, keywords, node_id=None):
        if node_id in self.records and self.records[node_id][0]:
            return self.records[node_id][0].split()
        return self.fallback.rewrite_phrase(keywords, node_id)

    def connective(self, parent_phrase, child_phrase, node_id=None):
        if node_id in self.records and self.records[node_id][1]:
            return self.records[node_id][1]
        return self.fallback.connective(parent_phrase, child_phrase, node_id)


@dataclass(frozen=True)
class NodeSpan:
    """Word offsets ``[start, end)`` of a node's phrase inside its members' docids."""

    node_id: int
    parent: Optional[int]
    children: Tuple[int, ...]
    start: int
    end: int
    doc_id: str
    n_docs: int


@dataclass(frozen=True)
class Smoothed:
    docids: Dict[str, str]
    spans: Dict[int, NodeSpan]
    phrases: Dict[int, Tuple[str, ...]]
    fallbacks: Tuple[int, ...] = ()


def _check_words(words: Sequence[str], what: str) -> List[str]:
    words = list(words)
    if not words:
        raise SmoothingError(f"rewriter returned an empty phrase for {what}")
    for w in words:
        if not w or _FORBIDDEN & set(w):
            raise SmoothingError(f"rewriter returned {w!r} for {what}; words may not contain separators")
    return words


def smooth_ids(
    ids: Mapping[str, C2TId],
    tree: ClusterTree,
    rw: Rewriter,
    rankings: Optional[Mapping[int, Sequence[str]]] = None,
    intra_sep: str = "-",
    resolve_collisions: bool = True,
) -> Smoothed:
    """Rewrite each node's keyword run once and join levels with connective words.

    Every document under a node shares that node's rewritten phrase. Sibling
    phrases must start with distinct words so the trie still branches exactly
    where the tree does; on a clash the node's best unused keyword is put in
    front, and if that clashes too the node keeps its hyphen-joined keywords
    as a single word.
    """
    if not ids:
        raise SmoothingError("nothing to smooth")
    node_keywords: Dict[int, List[str]] = {}
    for cid in ids.values():
        for nid, seg in zip(cid.node_ids, cid.segments):
            node_keywords.setdefault(nid, seg.split(intra_sep))

    phrases: Dict[int, List[str]] = {}
    for nid in sorted(node_keywords):
        phrases[nid] = _check_words(rw.rewrite_phrase(node_keywords[nid], node_id=nid), f"node {nid}")

    fallbacks = []
    if resolve_collisions:
        for parent in sorted({tree.nodes[n].parent for n in node_keywords}):
            claimed = set()
            for child in tree.nodes[parent].children:
                if child not in phrases:
                    continue
                phrase = phrases[child]
                if phrase[0] in claimed:
                    kws = node_keywords[child]
                    spare = next((k for k in (rankings or {}).get(child, ()) if k not in kws), None)
                    if spare is not None and spare not in claimed:
                        phrase = [spare] + phrase
                    else:
                        fallbacks.append(child)
                        phrase = [intra_sep.join(kws)]
                        if phrase[0] in claimed:
                            phrase = [f"{phrase[0]}{intra_sep}{tree.nodes[child].label}"]
                phrases[child] = phrase
                claimed.add(phrase[0])

    doc_phrase = {
        d: _check_words(rw.rewrite_phrase(cid.segments[-1].split(intra_sep), node_id=None), f"document {d}")
        for d, cid in ids.items()
    }

    # one outgoing connective per node, proposed with its first child's phrase
    connectives: Dict[int, str] = {}
    for nid in sorted(node_keywords):
        node = tree.nodes[nid]
        if node.is_leaf:
            first = [d for d in sorted(node.members) if d in doc_phrase]
            if not first:
                continue
            child_phrase = doc_phrase[first[0]]
        else:
            child_phrase = phrases.get(node.children[0], [])
        conn = rw.connective(" ".join(phrases[nid]), " ".join(child_phrase), node_id=nid)
        if not conn or len(conn.split()) != 1 or _FORBIDDEN & set(conn):
            raise SmoothingError(f"connective {conn!r} for node {nid} must be a single word")
        connectives[nid] = conn

    docids: Dict[str, str] = {}
    starts: Dict[int, Tuple[int, int, str]] = {}
    for doc_id in sorted(ids):
        cid = ids[doc_id]
        words: List[str] = []
        prev = None
        for nid in cid.node_ids:
            if prev is not None:
                words.append(connectives[prev])
            start = len(words)
            words.extend(phrases[nid])
            starts.setdefault(nid, (start, len(words), doc_id))
            prev = nid
        if prev is not None:
            words.append(connectives[prev])
        words.extend(doc_phrase[doc_id])
        suffix = f"#{cid.disambiguator}" if cid.disambiguator else ""
        docids[doc_id] = " ".join(words) + suffix

    seen: Dict[str, int] = {}
    for doc_id in sorted(docids):
        s = docids[doc_id]
        n = seen.get(s, 0)
        seen[s] = n + 1
        if n:
            docids[doc_id] = f"{s}#{n}"

    spans = {}
    root = tree.nodes[tree.root]
    spans[root.node_id] = NodeSpan(root.node_id, None, root.children, 0, 0,
                                   min(ids), len(ids))
    for nid, (start, end, rep) in starts.items():
        node = tree.nodes[nid]
        spans[nid] = NodeSpan(nid, node.parent, node.children, start, end, rep,
                              sum(1 for d in node.members if d in ids))
    return Smoothed(docids, spans, {n: tuple(p) for n, p in phrases.items()}, tuple(fallbacks))


@dataclass
class TopologyReport:
    ok: bool
    violations: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def verify_topology(original: DocidTrie, smoothed: DocidTrie, spans: Mapping[int, NodeSpan]) -> TopologyReport:
    """Check that smoothing kept the decoding trie's branch structure.

    ``smoothed`` must be a word-mode trie, so word offsets in ``spans`` are
    token offsets.
    """
    bad: List[str] = []
    if len(original.terminal) != len(smoothed.terminal):
        bad.append(f"terminal-count: {len(original.terminal)} != {len(smoothed.terminal)}")

    def walk(doc_id: str) -> List[int]:
        nodes = [smoothed.root]
        for t in smoothed.sequences[doc_id]:
            nodes.append(smoothed.step(nodes[-1], t))
        return nodes

    paths = {}
    for span in spans.values():
        if span.doc_id not in paths:
            paths[span.doc_id] = walk(span.doc_id)

    def fanout(node: int) -> int:
        return len(smoothed.children(node))

    for nid in sorted(spans):
        span = spans[nid]
        trail = paths[span.doc_id]
        for j in range(span.start + 1, span.end):
            if fanout(trail[j]) != 1:
                bad.append(f"branch-inside-span: node {nid} at offset {j}")
        # root has no phrase and no connective
        branch_at = span.end if span.parent is None else span.end + 1
        if span.parent is not None and fanout(trail[span.end]) != 1:
            bad.append(f"connective-branch: node {nid}")
        if branch_at >= len(trail):
            bad.append(f"span-overrun: node {nid}")
            continue
        branch = trail[branch_at]
        if not span.children:
            if _terminals_below(smoothed, branch) != span.n_docs:
                bad.append(f"leaf-docs-mismatch: node {nid}")
            continue
        firsts: Dict[int, int] = {}
        for child in span.children:
            cs = spans.get(child)
            if cs is None:
                bad.append(f"missing-span: node {child}")
                continue
            ctrail = paths[cs.doc_id]
            if cs.start != branch_at or ctrail[branch_at] != branch:
                bad.append(f"misplaced-child: node {child} under {nid}")
                continue
            tok = smoothed.sequences[cs.doc_id][cs.start]
            if tok in firsts:
                bad.append(f"sibling-prefix-collision: nodes {firsts[tok]} and {child} under {nid}")
            firsts[tok] = child
        if fanout(branch) != len(span.children):
            bad.append(f"fanout-mismatch: node {nid} has {len(span.children)} children, trie fanout {fanout(branch)}")
    return TopologyReport(not bad, bad)


def _terminals_below(trie: DocidTrie, node: int) -> int:
    count, stack = 0, [node]
    while stack:
        n = stack.pop()
        if n in trie.terminal:
            count += 1
        stack.extend(trie.children(n).values())
    return count
