"""Docid tokenization and the prefix trie that constrains decoding."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

BOS, EOS, SEP = 0, 1, 2
RESERVED = ("<bos>", "<eos>", "<sep>")

_SUFFIX_RE = re.compile(r"^(.*?)((?:#\d+)*)$", re.S)


class TokenizerError(ValueError):
    pass


class TrieError(ValueError):
    pass


@dataclass(frozen=True)
class Tokenizer:
    """Maps docid strings to token ids and back.

    ``word`` mode emits one token per keyword; ``segment`` mode additionally
    emits ``SEP`` between levels. A trailing ``#n`` disambiguator is always a
    token of its own. Word mode detokenizes with ``intra_sep``, so it needs
    ``level_sep == intra_sep`` to be invertible.
    """

    mode: str = "word"
    level_sep: str = "-"
    intra_sep: str = "-"
    vocab: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("word", "segment"):
            raise TokenizerError(f"unknown tokenizer mode {self.mode!r}")
        if self.mode == "word" and self.level_sep != self.intra_sep:
            raise TokenizerError("word mode needs level_sep == intra_sep; use segment mode")
        inv = {i: t for t, i in self.vocab.items()}
        object.__setattr__(self, "_inverse", inv)

    # -- string level -----------------------------------------------------

    def _split_words(self, text: str, seps: Sequence[str]) -> List[str]:
        pattern = "|".join([re.escape(s) for s in seps if not s.isspace()] + [r"\s+"])
        return [w for w in re.split(pattern, text) if w]

    def pieces(self, docid: str) -> List[str]:
        """Token strings for ``docid`` (without EOS)."""
        if not docid:
            raise TokenizerError("cannot tokenize an empty docid")
        body, suffix = _SUFFIX_RE.match(docid).groups()
        tail = ["#" + n for n in suffix.split("#") if n]
        if self.mode == "word":
            toks = self._split_words(body, (self.level_sep, self.intra_sep))
        else:
            toks = []
            for i, seg in enumerate(body.split(self.level_sep)):
                if i:
                    toks.append(RESERVED[SEP])
                toks.extend(self._split_words(seg, (self.intra_sep,)))
        return toks + tail

    def detokenize_pieces(self, toks: Sequence[str]) -> str:
        body: List[str] = []
        tail = ""
        for t in toks:
            if t == RESERVED[EOS]:
                break
            if t.startswith("#"):
                tail += t
            else:
                body.append(t)
        if self.mode == "word":
            return self.intra_sep.join(body) + tail
        groups: List[List[str]] = [[]]
        for t in body:
            if t == RESERVED[SEP]:
                groups.append([])
            else:
                groups[-1].append(t)
        return self.level_sep.join(self.intra_sep.join(g) for g in groups) + tail

    # -- id level -----------------------------------------------------------

    def tokenize(self, docid: str) -> List[int]:
        out = []
        for piece in self.pieces(docid):
            if piece not in self.vocab:
                raise TokenizerError(f"token {piece!r} of {docid!r} is not in the vocabulary")
            out.append(self.vocab[piece])
        out.append(EOS)
        return out

    def detokenize(self, ids: Sequence[int]) -> str:
        return self.detokenize_pieces([self._inverse[i] for i in ids])

    def token(self, token_id: int) -> str:
        return self._inverse[token_id]

    @property
    def size(self) -> int:
        return len(self.vocab)

    @classmethod
    def build(
        cls, docids: Sequence[str], mode: str = "word", level_sep: str = "-", intra_sep: Optional[str] = None
    ) -> "Tokenizer":
        """Build a vocabulary from ``docids`` and check every one round-trips."""
        intra = level_sep if intra_sep is None else intra_sep
        probe = cls(mode=mode, level_sep=level_sep, intra_sep=intra)
        pieces = set()
        for d in docids:
            pieces.update(probe.pieces(d))
        pieces -= set(RESERVED)
        vocab = {t: i for i, t in enumerate(RESERVED)}
        for t in sorted(pieces):
            vocab[t] = len(vocab)
        tok = cls(mode=mode, level_sep=level_sep, intra_sep=intra, vocab=vocab)
        for d in docids:
            if tok.detokenize(tok.tokenize(d)) != d:
                raise TokenizerError(f"docid {d!r} does not round-trip under {mode} tokenization")
        return tok

    def to_dict(self) -> dict:
        return {"mode": self.mode, "level_sep": self.level_sep, "intra_sep": self.intra_sep,
                "vocab": sorted(self.vocab.items(), key=lambda kv: kv[1])}

    @classmethod
    def from_dict(cls, d: dict) -> "Tokenizer":
        return cls(mode=d["mode"], level_sep=d["level_sep"], intra_sep=d["intra_sep"],
                   vocab={t: int(i) for t, i in d["vocab"]})

    def write_vocab_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for t, i in sorted(self.vocab.items(), key=lambda kv: kv[1]):
                fh.write(f"{t}\t{i}\n")


class DocidTrie:
    """Token-id prefix trie over EOS-terminated docid sequences.

    Nodes are integers; node 0 is the root. Immutable once built.
    """

    def __init__(self, tokenizer: Tokenizer):
        self.tokenizer = tokenizer
        self._children: List[Dict[int, int]] = [{}]
        self.terminal: Dict[int, str] = {}
        self.sequences: Dict[str, Tuple[int, ...]] = {}
        self._max_depth: Optional[int] = None

    root = 0

    def _insert(self, doc_id: str, seq: Sequence[int]) -> None:
        node = 0
        for t in seq:
            nxt = self._children[node].get(t)
            if nxt is None:
                nxt = len(self._children)
                self._children[node][t] = nxt
                self._children.append({})
            node = nxt
        if node in self.terminal:
            raise TrieError(f"docids of {self.terminal[node]!r} and {doc_id!r} tokenize identically")
        self.terminal[node] = doc_id
        self.sequences[doc_id] = tuple(seq)
        self._max_depth = None

    def node_at(self, prefix: Sequence[int]) -> Optional[int]:
        node = 0
        for t in prefix:
            node = self._children[node].get(t)
            if node is None:
                return None
        return node

    def children(self, node: int) -> Mapping[int, int]:
        return self._children[node]

    def step(self, node: int, token: int) -> Optional[int]:
        return self._children[node].get(token)

    def allowed_next(self, prefix: Sequence[int]) -> FrozenSet[int]:
        node = self.node_at(prefix)
        if node is None:
            return frozenset()
        return frozenset(self._children[node])

    def complete(self, tokens: Sequence[int]) -> Optional[str]:
        node = self.node_at(tokens)
        return None if node is None else self.terminal.get(node)

    @property
    def num_nodes(self) -> int:
        return len(self._children)

    @property
    def num_edges(self) -> int:
        return len(self._children) - 1

    @property
    def max_depth(self) -> int:
        if self._max_depth is None:
            self._max_depth = max((len(s) for s in self.sequences.values()), default=0)
        return self._max_depth

    def to_json(self) -> str:
        payload = {
            "tokenizer": self.tokenizer.to_dict(),
            "docids": {d: self.tokenizer.detokenize(s) for d, s in sorted(self.sequences.items())},
            "nodes": [
                {"id": i, "children": sorted(ch.items()), **({"doc_id": self.terminal[i]} if i in self.terminal else {})}
                for i, ch in enumerate(self._children)
            ],
        }
        return json.dumps(payload, ensure_ascii=False, indent=None, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DocidTrie":
        payload = json.loads(text)
        return build_trie(payload["docids"], Tokenizer.from_dict(payload["tokenizer"]))


def build_trie(docids: Mapping[str, str], tok: Tokenizer) -> DocidTrie:
    """Insert every docid (as ``doc_id -> docid string``) in doc_id order."""
    strings = list(docids.values())
    if len(set(strings)) != len(strings):
        dup = next(s for s in strings if strings.count(s) > 1)
        raise TrieError(f"duplicate docid string {dup!r}")
    trie = DocidTrie(tok)
    for doc_id in sorted(docids):
        trie._insert(doc_id, tok.tokenize(docids[doc_id]))
    return trie
