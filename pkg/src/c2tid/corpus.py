"""Corpus ingestion, serialization and deterministic hashed-TF embeddings."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from .textutil import words


class CorpusError(ValueError):
    """Raised for malformed corpus or embedding input."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str = ""
    metadata: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "text": self.text,
            "metadata": {name: list(vals) for name, vals in sorted(self.metadata.items())},
        }


@dataclass(frozen=True)
class Corpus:
    """Documents in ascending ``doc_id`` order; ids are unique."""

    documents: Tuple[Document, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.documents, key=lambda d: d.doc_id))
        seen = set()
        for doc in ordered:
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        object.__setattr__(self, "documents", ordered)
        object.__setattr__(self, "_index", {d.doc_id: d for d in ordered})

    @property
    def size(self) -> int:
        return len(self.documents)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self._index[doc_id]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._index

    @property
    def doc_ids(self) -> List[str]:
        return [d.doc_id for d in self.documents]


def _normalize_metadata(raw, where: str) -> Dict[str, Tuple[str, ...]]:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: metadata must be an object")
    out: Dict[str, Tuple[str, ...]] = {}
    for name, values in raw.items():
        key = str(name).strip()
        if not key:
            raise CorpusError(f"{where}: empty metadata field name")
        if isinstance(values, str) or not isinstance(values, list):
            raise CorpusError(f"{where}: metadata field {key!r} must be a list of strings")
        cleaned = []
        for v in values:
            if not isinstance(v, str):
                raise CorpusError(f"{where}: metadata field {key!r} holds a non-string value")
            v = v.strip().lower()
            if v:
                cleaned.append(v)
        out[key] = tuple(cleaned)
    return out


def document_from_record(record, where: str = "record") -> Document:
    if not isinstance(record, dict):
        raise CorpusError(f"{where}: expected a JSON object")
    for name in ("doc_id", "text"):
        if name not in record:
            raise CorpusError(f"{where}: missing required field {name!r}")
        if not isinstance(record[name], str):
            raise CorpusError(f"{where}: field {name!r} must be a string")
    title = record.get("title", "")
    if title is None:
        title = ""
    if not isinstance(title, str):
        raise CorpusError(f"{where}: field 'title' must be a string")
    doc_id = record["doc_id"].strip()
    if not doc_id:
        raise CorpusError(f"{where}: empty doc_id")
    return Document(
        doc_id=doc_id,
        title=title.strip(),
        text=record["text"].strip(),
        metadata=_normalize_metadata(record.get("metadata"), where),
    )


def ingest_jsonl(path) -> Corpus:
    """Load a JSONL corpus, one document per line.

    Blank lines are skipped. Any malformed line raises :class:`CorpusError`
    carrying its 1-based line number; duplicate ids raise naming the id.
    """
    docs: List[Document] = []
    first_line: Dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: invalid JSON ({exc.msg})") from None
            doc = document_from_record(record, where)
            if doc.doc_id in first_line:
                raise CorpusError(
                    f"{where}: duplicate doc_id {doc.doc_id!r} "
                    f"(first seen on line {first_line[doc.doc_id]})"
                )
            first_line[doc.doc_id] = lineno
            docs.append(doc)
    if not docs:
        raise CorpusError(f"{path}: corpus file is empty")
    return Corpus(tuple(docs))


def write_jsonl(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """One finite vector per document, rows aligned with ``doc_ids``."""

    doc_ids: Tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.doc_ids):
            raise CorpusError("embedding matrix shape does not match doc_ids")
        if vecs.shape[1] < 1:
            raise CorpusError("embedding dim must be positive")
        if not np.all(np.isfinite(vecs)):
            raise CorpusError("embedding rows must be finite")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise CorpusError("embedding rows must have unique doc_ids")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "_pos", {d: i for i, d in enumerate(self.doc_ids)})

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def rows(self) -> Dict[str, np.ndarray]:
        return {d: self.vectors[i] for i, d in enumerate(self.doc_ids)}

    def __getitem__(self, doc_id: str) -> np.ndarray:
        return self.vectors[self._pos[doc_id]]

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._pos

    def take(self, doc_ids: Sequence[str]) -> np.ndarray:
        return self.vectors[[self._pos[d] for d in doc_ids]]


def hash_bucket(token: str, dim: int, seed: int) -> int:
    digest = hashlib.blake2b(f"{seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


def embed_text(text: str, dim: int, seed: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    for tok in words(text):
        vec[hash_bucket(tok, dim, seed)] += 1.0
    norm = math.sqrt(float(vec @ vec))
    if norm > 0:
        vec /= norm
    return vec


def embed_corpus(corpus: Corpus, dim: int, seed: int) -> EmbeddingMatrix:
    """Seeded hashed term-frequency embedding of title + text, L2-normalized.

    Raises:
        CorpusError: if ``dim < 2``, the corpus is empty, or a document has
            no tokens at all (its row would be the zero vector).
    """
    if dim < 2:
        raise CorpusError(f"dim must be >= 2, got {dim}")
    if len(corpus) == 0:
        raise CorpusError("cannot embed an empty corpus")
    rows = []
    for doc in corpus:
        vec = embed_text(f"{doc.title} {doc.text}", dim, seed)
        if not vec.any():
            raise CorpusError(f"document {doc.doc_id!r} has no tokens to embed")
        rows.append(vec)
    return EmbeddingMatrix(tuple(corpus.doc_ids), np.vstack(rows))


def load_embeddings_jsonl(path, corpus: Corpus | None = None) -> EmbeddingMatrix:
    """Import externally computed vectors: ``{"doc_id": ..., "vector": [...]}`` per line."""
    ids: List[str] = []
    vecs: List[List[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id, vec = rec["doc_id"], rec["vector"]
            except (json.JSONDecodeError, KeyError, TypeError):
                raise CorpusError(f"{path}:{lineno}: expected {{'doc_id', 'vector'}}") from None
            if vecs and len(vec) != len(vecs[0]):
                raise CorpusError(f"{path}:{lineno}: vector length {len(vec)} != {len(vecs[0])}")
            ids.append(str(doc_id))
            vecs.append([float(x) for x in vec])
    if not ids:
        raise CorpusError(f"{path}: no vectors")
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    emb = EmbeddingMatrix(tuple(ids[i] for i in order), np.array([vecs[i] for i in order]))
    if corpus is not None:
        missing = [d for d in corpus.doc_ids if d not in emb]
        if missing:
            raise CorpusError(f"no embedding for doc_id {missing[0]!r}")
    return emb


def write_embeddings_jsonl(emb: EmbeddingMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, row in zip(emb.doc_ids, emb.vectors):
            fh.write(json.dumps({"doc_id": doc_id, "vector": [float(x) for x in row]}) + "\n")


def iter_documents(records: Iterable[dict]) -> Corpus:
    """Build a corpus from in-memory records (same validation as ingest)."""
    return Corpus(tuple(document_from_record(r, f"record {i}") for i, r in enumerate(records)))
