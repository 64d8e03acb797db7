import random

import pytest
from hypothesis import given, settings, strategies as st

from c2tid.trie import BOS, EOS, SEP, DocidTrie, Tokenizer, TokenizerError, TrieError, build_trie

THREE = {"d1": "a-b", "d2": "a-c", "d3": "d"}


def _trie(docids, mode="word", level_sep="-", intra_sep=None):
    tok = Tokenizer.build(list(docids.values()), mode=mode, level_sep=level_sep, intra_sep=intra_sep)
    return build_trie(docids, tok)


def test_reserved_ids():
    tok = Tokenizer.build(["phone-case"])
    assert (tok.vocab["<bos>"], tok.vocab["<eos>"], tok.vocab["<sep>"]) == (BOS, EOS, SEP)
    assert sorted(tok.vocab.values()) == list(range(tok.size))


def test_word_mode_tokenize():
    tok = Tokenizer.build(["phone-case"])
    assert tok.tokenize("phone-case") == [tok.vocab["phone"], tok.vocab["case"], EOS]


def test_segment_mode_emits_sep():
    tok = Tokenizer.build(["a b-c"], mode="segment", level_sep="-", intra_sep=" ")
    assert tok.pieces("a b-c") == ["a", "b", "<sep>", "c"]
    assert tok.detokenize(tok.tokenize("a b-c")) == "a b-c"


def test_disambiguator_is_its_own_token():
    tok = Tokenizer.build(["x-y", "x-y#1"])
    assert tok.pieces("x-y#1") == ["x", "y", "#1"]
    assert tok.detokenize(tok.tokenize("x-y#1")) == "x-y#1"


def test_tokenizer_errors():
    tok = Tokenizer.build(["a-b"])
    with pytest.raises(TokenizerError):
        tok.tokenize("")
    with pytest.raises(TokenizerError, match="'zz'"):
        tok.tokenize("a-zz")
    with pytest.raises(TokenizerError):
        Tokenizer(mode="bpe")
    with pytest.raises(TokenizerError):
        Tokenizer(mode="word", level_sep="-", intra_sep=" ")


def test_three_docid_example():
    trie = _trie(THREE)
    v = trie.tokenizer.vocab
    assert len(trie.terminal) == 3
    assert trie.allowed_next([]) == {v["a"], v["d"]}
    assert trie.allowed_next([v["a"]]) == {v["b"], v["c"]}
    full = trie.sequences["d1"]
    assert trie.allowed_next(full) == frozenset()
    assert trie.complete(full) == "d1"
    assert trie.complete(full[:-1]) is None
    assert trie.complete([v["d"], v["b"], EOS]) is None


def test_segment_mode_prefix_gives_sep():
    trie = _trie(THREE, mode="segment", intra_sep=" ")
    assert trie.allowed_next([trie.tokenizer.vocab["a"]]) == {SEP}


def test_single_docid_is_a_chain():
    trie = _trie({"d": "p-q-r"})
    node = trie.root
    for _ in range(4):
        assert len(trie.children(node)) == 1
        node = next(iter(trie.children(node).values()))
    assert trie.children(node) == {}


def test_prefix_docid_kept_distinct_by_eos():
    trie = _trie({"d1": "a", "d2": "a-b"})
    v = trie.tokenizer.vocab
    assert trie.allowed_next([v["a"]]) == {EOS, v["b"]}
    assert trie.complete([v["a"], EOS]) == "d1"


def test_duplicate_docid_string_rejected():
    tok = Tokenizer.build(["a-b"])
    with pytest.raises(TrieError, match="a-b"):
        build_trie({"d1": "a-b", "d2": "a-b"}, tok)


_word = st.sampled_from(["ab", "cd", "ef", "gh", "ij"])
_docid = st.lists(_word, min_size=1, max_size=4).map("-".join)


@settings(max_examples=60, deadline=None)
@given(st.lists(_docid, min_size=1, max_size=25, unique=True), st.randoms(use_true_random=False))
def test_allowed_next_matches_linear_scan(strings, rnd):
    docids = {f"d{i:02d}": s for i, s in enumerate(strings)}
    trie = _trie(docids)
    seqs = [trie.tokenizer.tokenize(s) for s in strings]
    ids = list(trie.tokenizer.vocab.values())
    prefixes = []
    for seq in seqs:
        cut = rnd.randint(0, len(seq))
        prefixes.append(seq[:cut])
        corrupt = list(seq[:cut]) + [rnd.choice(ids)]
        prefixes.append(corrupt)
    for p in prefixes:
        expected = {s[len(p)] for s in seqs if len(s) > len(p) and s[: len(p)] == list(p)}
        assert trie.allowed_next(p) == expected
    assert len(trie.terminal) == len(strings)
    assert trie.num_edges <= sum(map(len, seqs))
    for d, s in docids.items():
        assert trie.tokenizer.detokenize(trie.tokenizer.tokenize(s)) == s
        assert trie.complete(trie.tokenizer.tokenize(s)) == d


def test_synthetic_docids_round_trip(small_index):
    for scheme in ("c2t", "c2t_smoothed", "title"):
        docids = small_index.docids[scheme]
        sep = " " if scheme != "c2t" else "-"
        trie = _trie(docids, level_sep=sep)
        assert len(trie.terminal) == len(docids)
        for s in docids.values():
            assert trie.tokenizer.detokenize(trie.tokenizer.tokenize(s)) == s


def test_json_round_trip():
    trie = _trie({"d1": "a-b", "d2": "a-c#1", "d3": "d"})
    again = DocidTrie.from_json(trie.to_json())
    assert again.to_json() == trie.to_json()
    assert again.sequences == trie.sequences and again.max_depth == 4


def test_vocab_tsv(tmp_path):
    tok = Tokenizer.build(["b-a"])
    tok.write_vocab_tsv(tmp_path / "v.tsv")
    lines = (tmp_path / "v.tsv").read_text().splitlines()
    assert lines == ["<bos>\t0", "<eos>\t1", "<sep>\t2", "a\t3", "b\t4"]
