import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.cluster.hierarchy import linkage

from opaque_topk.index import (
    Index,
    IndexFormatError,
    build_index,
    dumps_index,
    hac_average_linkage,
    index_from_partition,
    kmeans,
    load_index,
    save_index,
)


def pairs(values):
    return [(f"p{i}", [float(v)]) for i, v in enumerate(values)]


def test_kmeans_single_cluster_is_mean():
    data = pairs([1.0, 2.0, 6.0])
    (c,) = kmeans(data, 1)
    assert c.centroid == pytest.approx((3.0,))
    assert sorted(c.members) == ["p0", "p1", "p2"]


def test_kmeans_separated_blobs():
    data = pairs([0.0, 0.1, 9.9, 10.0])
    for seed in range(10):
        groups = sorted(sorted(c.members) for c in kmeans(data, 2, seed))
        assert groups == [["p0", "p1"], ["p2", "p3"]]


def test_kmeans_one_cluster_per_point():
    data = pairs([3.0, 1.0, 2.0, 5.0])
    clusters = kmeans(data, 4, seed=3)
    assert sorted(len(c.members) for c in clusters) == [1, 1, 1, 1]


def test_kmeans_duplicate_points_still_fill_clusters():
    clusters = kmeans(pairs([1.0, 1.0, 1.0, 2.0]), 3, seed=0)
    assert all(c.members for c in clusters)
    assert sum(len(c.members) for c in clusters) == 4


def test_kmeans_rejects_too_many_clusters():
    with pytest.raises(ValueError):
        kmeans(pairs([1.0, 2.0]), 3)


def test_kmeans_deterministic():
    rng = np.random.default_rng(1)
    data = [(f"x{i}", v) for i, v in enumerate(rng.normal(size=(300, 3)).tolist())]
    assert kmeans(data, 7, seed=5) == kmeans(data, 7, seed=5)


def test_hac_small_example():
    merges = hac_average_linkage([[0.0], [1.0], [10.0]])
    assert [(m.left, m.right) for m in merges] == [(0, 1), (2, 3)]
    assert [m.distance for m in merges] == [1.0, 9.5]
    assert [m.size for m in merges] == [2, 3]


def test_hac_degenerate():
    assert hac_average_linkage([[4.0, 2.0]]) == []
    (m,) = hac_average_linkage([[0.0], [3.0]])
    assert (m.left, m.right, m.distance) == (0, 1, 3.0)


def test_hac_tie_breaks_by_smallest_pair():
    # 0-1 and 2-3 both at distance 1; the pair with the smaller ids goes first
    merges = hac_average_linkage([[0.0], [1.0], [5.0], [6.0]])
    assert (merges[0].left, merges[0].right) == (0, 1)
    assert (merges[1].left, merges[1].right) == (2, 3)


@given(st.integers(2, 25), st.integers(1, 4), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_hac_heights_match_scipy(m, dim, seed):
    x = np.random.default_rng(seed).normal(size=(m, dim))
    ours = sorted(mg.distance for mg in hac_average_linkage(x))
    ref = sorted(linkage(x, method="average", metric="euclidean")[:, 2])
    assert ours == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_build_two_pairs():
    index = build_index(pairs([0.0, 0.2, 8.0, 8.1]), 2)
    assert index.leaf_count == 2 and index.dataset_size == 4
    assert len(index.root.children) == 2
    assert sorted(sorted(leaf.elements) for leaf in index.leaves()) == [["p0", "p1"], ["p2", "p3"]]


def test_build_single_leaf():
    index = build_index(pairs([1.0, 2.0, 3.0]), 1)
    assert index.root.is_leaf
    assert index.depth() == 0


def test_build_partition_large():
    rng = np.random.default_rng(0)
    data = [(f"e{i}", [v]) for i, v in enumerate(rng.normal(size=50_000).tolist())]
    index = build_index(data, 20, clustering_subsample=5000, seed=1)
    sizes = [len(leaf.elements) for leaf in index.leaves()]
    assert sum(sizes) == 50_000
    assert len(set(index.element_ids())) == 50_000
    assert index.build_seconds > 0


def test_subsample_assigns_everything_to_nearest():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2000, 2))
    data = [(f"e{i}", v) for i, v in enumerate(x.tolist())]
    index = build_index(data, 5, clustering_subsample=300, seed=4)
    cents = {leaf.node_id: np.array(leaf.centroid) for leaf in index.leaves()}
    where = {e: leaf.node_id for leaf in index.leaves() for e in leaf.elements}
    for i in range(0, 2000, 37):
        d = {nid: np.linalg.norm(x[i] - c) for nid, c in cents.items()}
        assert d[where[f"e{i}"]] == pytest.approx(min(d.values()))


def test_index_from_partition():
    index = index_from_partition(["a", "b", "c", "d"], [[0.0], [1.0], [10.0], [11.0]], [1, 1, 0, 0])
    by_id = {leaf.node_id: leaf for leaf in index.leaves()}
    # groups are taken in label order
    assert by_id["leaf-00000"].elements == ("c", "d")
    assert by_id["leaf-00000"].centroid == (10.5,)
    assert by_id["leaf-00001"].elements == ("a", "b")
    assert by_id["leaf-00001"].centroid == (0.5,)


def test_round_trip_and_determinism(tmp_path):
    rng = np.random.default_rng(3)
    data = [(f"e{i}", v) for i, v in enumerate(rng.normal(size=(500, 2)).tolist())]
    a = build_index(data, 8, seed=2)
    b = build_index(data, 8, seed=2)
    assert dumps_index(a) == dumps_index(b)
    path = tmp_path / "index.json"
    save_index(a, path)
    loaded = load_index(path)
    assert loaded == a
    assert dumps_index(loaded) == dumps_index(a)
    raw = json.loads(path.read_text())
    assert set(raw) == {"version", "dataset_size", "leaf_count", "root"}
    assert raw["version"] == 1


def _write(tmp_path, data):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    return path


def leaf(node_id, elements, centroid=(0.0,)):
    return {"node_id": node_id, "elements": list(elements), "centroid": list(centroid)}


def doc(root, leaf_count, size):
    return {"version": 1, "dataset_size": size, "leaf_count": leaf_count, "root": root}


@pytest.mark.parametrize("data,fragment", [
    (doc({"node_id": "r", "children": [leaf("a", ["x"]), leaf("b", ["x"])]}, 2, 2), "duplicate element id"),
    (doc({"node_id": "r", "children": []}, 0, 0), "neither children nor elements"),
    (doc({"node_id": "r", "children": [leaf("a", ["x"])], "elements": ["y"]}, 1, 2), "both children and elements"),
    (doc(leaf("r", ["x"]), 2, 1), "leaf_count"),
    (doc(leaf("r", ["x"]), 1, 3), "dataset_size"),
    (doc({"node_id": "r", "children": [leaf("a", ["x"]), leaf("a", ["y"])]}, 2, 2), "duplicate node_id"),
    (doc(leaf("r", ["x"], centroid=()), 1, 1), "centroid"),
    ({"version": 2, "dataset_size": 1, "leaf_count": 1, "root": leaf("r", ["x"])}, "version"),
])
def test_schema_errors(tmp_path, data, fragment):
    with pytest.raises(IndexFormatError, match=fragment):
        load_index(_write(tmp_path, data))


def test_schema_error_names_node_path(tmp_path):
    data = doc({"node_id": "r", "children": [leaf("a", ["x"]), leaf("b", ["y", "x"])]}, 2, 3)
    with pytest.raises(IndexFormatError, match=r"root\.children\[1\]\.elements\[1\]"):
        load_index(_write(tmp_path, data))


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(IndexFormatError, match="malformed"):
        load_index(path)


def test_from_dict_matches_loaded():
    index = build_index(pairs([0.0, 1.0, 5.0, 6.0]), 2)
    assert Index.from_dict(index.to_dict()) == index


def test_build_scaling_smoke():
    rng = np.random.default_rng(0)

    def timed(n):
        data = [(f"e{i}", v) for i, v in enumerate(rng.normal(size=(n, 2)).tolist())]
        best = float("inf")
        for _ in range(3):
            start = time.perf_counter()
            build_index(data, 10, seed=0)
            best = min(best, time.perf_counter() - start)
        return best

    small, large = timed(20_000), timed(40_000)
    assert large < 3 * small
