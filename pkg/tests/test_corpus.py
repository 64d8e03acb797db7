import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c2tid.corpus import (
    Corpus,
    CorpusError,
    Document,
    EmbeddingMatrix,
    embed_corpus,
    hash_bucket,
    ingest_jsonl,
    iter_documents,
    load_embeddings_jsonl,
    write_embeddings_jsonl,
    write_jsonl,
)


def _write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_ingest_sorts_by_doc_id(tmp_path):
    path = _write_lines(tmp_path / "c.jsonl", [
        {"doc_id": "d3", "text": "gamma"},
        {"doc_id": "d1", "text": "alpha", "title": " A "},
        {"doc_id": "d2", "text": "beta"},
    ])
    corpus = ingest_jsonl(path)
    assert corpus.size == 3
    assert corpus.doc_ids == ["d1", "d2", "d3"]
    assert corpus["d1"].title == "A"


def test_duplicate_doc_id_is_named(tmp_path):
    recs = [{"doc_id": f"x{i}", "text": "t"} for i in range(5)]
    recs[1] = {"doc_id": "d1", "text": "first"}
    recs[4] = {"doc_id": "d1", "text": "again"}
    with pytest.raises(CorpusError, match=r"d1") as err:
        ingest_jsonl(_write_lines(tmp_path / "c.jsonl", recs))
    assert ":5:" in str(err.value) and "line 2" in str(err.value)


def test_missing_text_cites_line(tmp_path):
    path = _write_lines(tmp_path / "c.jsonl", [{"doc_id": "a", "text": "x"}, {"doc_id": "b"}])
    with pytest.raises(CorpusError, match=r":2: missing required field 'text'"):
        ingest_jsonl(path)


def test_bad_json_cites_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"doc_id": "a", "text": "x"}\n{not json\n', encoding="utf-8")
    with pytest.raises(CorpusError, match=r":2: invalid JSON"):
        ingest_jsonl(path)


def test_empty_file_rejected(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("\n\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty"):
        ingest_jsonl(path)


@pytest.mark.parametrize("meta", [{"categories": "Physics"}, {"categories": [1]}, ["x"], {"": ["a"]}])
def test_malformed_metadata_rejected(meta):
    with pytest.raises(CorpusError):
        iter_documents([{"doc_id": "a", "text": "x", "metadata": meta}])


def test_metadata_lowercased_and_trimmed():
    corpus = iter_documents([{"doc_id": "a", "text": "x",
                              "metadata": {" categories ": ["  Physics ", "", "All Pages"]}}])
    assert corpus["a"].metadata == {"categories": ("physics", "all pages")}


_text = st.text(alphabet="abc xyz", min_size=1, max_size=20).filter(lambda s: s.strip())
_record = st.fixed_dictionaries({
    "title": st.text(alphabet="AbC d", max_size=8),
    "text": _text,
    "metadata": st.dictionaries(st.sampled_from(["categories", "tags"]),
                                st.lists(st.text(alphabet="ab c", min_size=1, max_size=5).filter(str.strip), max_size=3),
                                max_size=2),
})


@settings(max_examples=40, deadline=None)
@given(st.lists(_record, min_size=1, max_size=6))
def test_write_then_ingest_round_trips(tmp_path_factory, records):
    recs = [dict(r, doc_id=f"d{i}") for i, r in enumerate(records)]
    corpus = iter_documents(recs)
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    write_jsonl(corpus, path)
    assert ingest_jsonl(path) == corpus


def _docs(*texts):
    return Corpus(tuple(Document(f"d{i}", t) for i, t in enumerate(texts)))


def test_identical_text_identical_rows():
    emb = embed_corpus(_docs("red fox", "red fox", "blue whale"), dim=32, seed=1)
    assert np.array_equal(emb["d0"], emb["d1"])
    assert not np.array_equal(emb["d0"], emb["d2"])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.text(alphabet="abcde ", min_size=1, max_size=30).filter(lambda s: s.strip()), min_size=1, max_size=5),
       st.integers(2, 64), st.integers(0, 5))
def test_rows_have_unit_norm(texts, dim, seed):
    emb = embed_corpus(_docs(*texts), dim=dim, seed=seed)
    for row in emb.vectors:
        assert abs(math.sqrt(float(row @ row)) - 1.0) < 1e-9


def test_tf_hand_computation():
    # find a dim where the two tokens land in different buckets
    dim = next(d for d in range(8, 200) if hash_bucket("aa", d, 0) != hash_bucket("bb", d, 0))
    row = embed_corpus(_docs("aa aa bb"), dim=dim, seed=0)["d0"]
    expected = np.zeros(dim)
    expected[hash_bucket("aa", dim, 0)] = 2 / math.sqrt(5)
    expected[hash_bucket("bb", dim, 0)] = 1 / math.sqrt(5)
    assert np.allclose(row, expected, atol=1e-12)


def test_embedding_is_pure_and_seeded():
    c = _docs("one two three", "four five")
    a, b = embed_corpus(c, 16, 3), embed_corpus(c, 16, 3)
    assert np.array_equal(a.vectors, b.vectors)
    assert a.vectors.flags.writeable is False


def test_tokenless_document_named():
    with pytest.raises(CorpusError, match="'d1'"):
        embed_corpus(_docs("fine words", "--- !!"), dim=8, seed=0)


def test_dim_must_be_at_least_two():
    with pytest.raises(CorpusError):
        embed_corpus(_docs("x"), dim=1, seed=0)


def test_nonfinite_rows_rejected():
    with pytest.raises(CorpusError):
        EmbeddingMatrix(("a",), np.array([[np.nan, 1.0]]))


def test_external_embeddings_round_trip(tmp_path):
    corpus = _docs("alpha beta", "gamma")
    emb = embed_corpus(corpus, 8, 0)
    path = tmp_path / "e.jsonl"
    write_embeddings_jsonl(emb, path)
    again = load_embeddings_jsonl(path, corpus)
    assert again.doc_ids == emb.doc_ids and np.array_equal(again.vectors, emb.vectors)


def test_external_embeddings_must_cover_corpus(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text('{"doc_id": "d0", "vector": [1, 0]}\n', encoding="utf-8")
    with pytest.raises(CorpusError, match="'d1'"):
        load_embeddings_jsonl(path, _docs("a", "b"))


def test_external_embeddings_dim_mismatch(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text('{"doc_id": "a", "vector": [1, 0]}\n{"doc_id": "b", "vector": [1]}\n', encoding="utf-8")
    with pytest.raises(CorpusError, match=":2:"):
        load_embeddings_jsonl(path)
