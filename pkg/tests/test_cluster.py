import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from c2tid.cluster import (
    ClusterError,
    ClusterParams,
    ClusterTree,
    _assign,
    assign_numeric_paths,
    build_tree,
    kmeans,
    lloyd,
    read_paths_tsv,
    validate_tree,
    within_cluster_sse,
    write_paths_tsv,
)
from c2tid.corpus import Corpus, Document, EmbeddingMatrix

FOUR = {"p1": (0.0, 0.0), "p2": (0.0, 1.0), "p3": (10.0, 10.0), "p4": (10.0, 11.0)}


def _brute_force_best_2_partition(points):
    ids = sorted(points)
    best = None
    for mask in range(1, 2 ** (len(ids) - 1)):
        assignment = {pid: (mask >> i) & 1 for i, pid in enumerate(ids)}
        sse = within_cluster_sse(points, assignment)
        if best is None or sse < best[0]:
            best = (sse, assignment)
    return best[1]


def _groups(assignment):
    out = {}
    for pid, lab in assignment.items():
        out.setdefault(lab, set()).add(pid)
    return sorted(map(frozenset, out.values()), key=min)


def test_two_blobs_match_brute_force():
    got = kmeans(list(FOUR.items()), k=2, seed=0)
    assert _groups(got) == _groups(_brute_force_best_2_partition(FOUR))
    assert got == {"p1": 0, "p2": 0, "p3": 1, "p4": 1}


def test_k_one_gives_single_cluster():
    assert set(kmeans(list(FOUR.items()), k=1).values()) == {0}


def test_fewer_distinct_points_than_k():
    pts = [("a", (0, 0)), ("b", (1, 1)), ("c", (2, 2))]
    assert kmeans(pts, k=5) == {"a": 0, "b": 1, "c": 2}


def test_duplicate_points_share_a_cluster():
    pts = [("a", (0, 0)), ("b", (5, 5)), ("c", (0, 0)), ("d", (5, 5))]
    assert kmeans(pts, k=3) == {"a": 0, "b": 1, "c": 0, "d": 1}


@pytest.mark.parametrize("k, pts", [(0, [("a", (0,))]), (2, [])])
def test_kmeans_errors(k, pts):
    with pytest.raises(ClusterError):
        kmeans(pts, k=k)


def test_ties_go_to_lower_index():
    X = np.array([[0.0, 0.0]])
    labels, _ = _assign(X, np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert labels.tolist() == [0]


_cloud = st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20)), min_size=2, max_size=25)


@settings(max_examples=60, deadline=None)
@given(_cloud, st.integers(1, 6), st.integers(0, 1000))
def test_labels_compact_and_ordered_by_smallest_member(pts, k, seed):
    points = [(f"p{i:02d}", p) for i, p in enumerate(pts)]
    got = kmeans(points, k, seed)
    labels = sorted(set(got.values()))
    assert labels == list(range(len(labels))) and len(labels) <= k
    firsts = [min(pid for pid, lab in got.items() if lab == j) for j in labels]
    assert firsts == sorted(firsts)


@settings(max_examples=60, deadline=None)
@given(_cloud, st.integers(2, 6), st.integers(0, 1000))
def test_sse_never_increases(pts, k, seed):
    X = np.asarray(pts, dtype=float)
    _, history = lloyd(X, k, seed, max_iters=30)
    assert all(b <= a + 1e-9 for a, b in zip(history, history[1:]))


@settings(max_examples=30, deadline=None)
@given(_cloud, st.integers(1, 5), st.randoms(use_true_random=False))
def test_input_order_does_not_matter(pts, k, rnd):
    points = [(f"p{i:02d}", p) for i, p in enumerate(pts)]
    shuffled = points[:]
    rnd.shuffle(shuffled)
    assert kmeans(points, k, 4) == kmeans(shuffled, k, 4)


def _emb(points):
    ids = tuple(sorted(points))
    return EmbeddingMatrix(ids, np.array([points[i] for i in ids], dtype=float))


def _corpus(ids):
    return Corpus(tuple(Document(d, "text") for d in ids))


def test_four_docs_k2_c1_trace():
    tree = build_tree(_emb(FOUR), _corpus(FOUR), ClusterParams(k=2, c=1))
    leaves = tree.leaves()
    assert len(leaves) == 4 and all(len(n.members) == 1 for n in leaves)
    assert max(n.depth for n in tree.nodes.values()) == 2
    paths = assign_numeric_paths(tree)
    # two split labels then the within-leaf index
    assert {d: p.labels for d, p in paths.items()} == {
        "p1": (0, 0, 0), "p2": (0, 1, 0), "p3": (1, 0, 0), "p4": (1, 1, 0)}


def test_small_corpus_is_single_leaf():
    tree = build_tree(_emb(FOUR), _corpus(FOUR), ClusterParams(k=2, c=4))
    assert tree.nodes[tree.root].is_leaf
    assert [p.labels for p in assign_numeric_paths(tree).values()] == [(0,), (1,), (2,), (3,)]


def test_single_leaf_paths_follow_doc_id_order():
    pts = {"d1": (0.0, 1.0), "d3": (2.0, 0.0), "d2": (5.0, 5.0)}
    paths = assign_numeric_paths(build_tree(_emb(pts), _corpus(pts), ClusterParams(c=3)))
    assert {d: p.labels for d, p in paths.items()} == {"d1": (0,), "d2": (1,), "d3": (2,)}


def test_identical_embeddings_use_round_robin():
    pts = {f"d{i:02d}": (1.0, 1.0) for i in range(10)}
    params = ClusterParams(k=4, c=3)
    tree = build_tree(_emb(pts), _corpus(pts), params)
    assert validate_tree(tree, params, list(pts)) == []
    root = tree.nodes[tree.root]
    # ceil(10 / 3) = 4 parts, dealt in doc_id order
    assert [tree.nodes[c].members for c in root.children] == [
        ("d00", "d04", "d08"), ("d01", "d05", "d09"), ("d02", "d06"), ("d03", "d07")]


def _random_tree(n, k, c, seed=0):
    rng = np.random.default_rng(seed)
    pts = {f"d{i:04d}": tuple(rng.normal(size=8)) for i in range(n)}
    params = ClusterParams(k=k, c=c, seed=seed)
    return build_tree(_emb(pts), _corpus(pts), params), params, list(pts)


@pytest.mark.parametrize("n, k, c", [(200, 3, 7), (150, 5, 4), (60, 2, 1)])
def test_tree_invariants(n, k, c):
    tree, params, ids = _random_tree(n, k, c)
    assert validate_tree(tree, params, ids) == []
    paths = assign_numeric_paths(tree)
    assert len({p.labels for p in paths.values()}) == n
    for doc_id, path in paths.items():
        route = tree.node_path(path.labels[:-1])
        leaf = tree.nodes[route[-1]] if route else tree.nodes[tree.root]
        assert leaf.is_leaf and doc_id in leaf.members
        assert path.labels[-1] < c


def test_tree_serialization_is_deterministic_and_round_trips():
    a, _, _ = _random_tree(120, 4, 9, seed=5)
    b, _, _ = _random_tree(120, 4, 9, seed=5)
    assert a.to_json() == b.to_json()
    assert ClusterTree.from_json(a.to_json()).to_json() == a.to_json()


def test_paths_tsv_round_trip(tmp_path):
    tree, _, _ = _random_tree(50, 3, 6)
    paths = assign_numeric_paths(tree)
    write_paths_tsv(paths, tmp_path / "p.tsv")
    assert read_paths_tsv(tmp_path / "p.tsv") == paths
    first = (tmp_path / "p.tsv").read_text().splitlines()[0]
    assert first == f"d0000\t{paths['d0000'].dotted()}"


def test_validate_tree_reports_violations():
    tree, params, ids = _random_tree(40, 3, 5)
    leaf = tree.leaves()[0]
    broken = dict(tree.nodes)
    broken[leaf.node_id] = replace(leaf, members=leaf.members + tuple(f"x{i}" for i in range(6)))
    problems = validate_tree(ClusterTree(broken, tree.root), params, ids)
    assert any("> c members" in p for p in problems)
    assert any("partition" in p for p in problems)


def test_missing_embedding_row():
    with pytest.raises(ClusterError, match="'zz'"):
        build_tree(_emb(FOUR), _corpus(list(FOUR) + ["zz"]), ClusterParams())


@pytest.mark.parametrize("kw", [{"k": 1}, {"c": 0}, {"max_iters": 0}, {"seed": -1}])
def test_params_validated(kw):
    with pytest.raises(ClusterError):
        ClusterParams(**kw)


def test_brute_force_oracle_on_three_clusters():
    pts = {"a": (0, 0), "b": (0, 1), "c": (9, 0), "d": (9, 1), "e": (0, 9), "f": (1, 9)}
    got = kmeans(list(pts.items()), k=3, seed=1)
    best = min(
        (within_cluster_sse(pts, dict(zip(sorted(pts), labs))), labs)
        for labs in itertools.product(range(3), repeat=6)
        if len(set(labs)) == 3
    )
    assert within_cluster_sse(pts, got) == pytest.approx(best[0])
