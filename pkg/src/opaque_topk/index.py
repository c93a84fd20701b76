"""Hierarchical cluster index: k-means leaves under an average-linkage dendrogram.

Index construction has three phases. A caller-supplied vectorizer turns
elements into vectors (the harness uses the identity for synthetic data),
k-means groups the vectors into leaf clusters, and agglomerative clustering
over the leaf centroids builds the tree the bandit descends at query time.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

INDEX_VERSION = 1


class IndexFormatError(ValueError):
    """A serialized index failed validation; the message names the node path."""


class Cluster(NamedTuple):
    centroid: tuple[float, ...]
    members: list[str]


class Merge(NamedTuple):
    left: int
    right: int
    distance: float
    size: int


@dataclass(frozen=True)
class IndexNode:
    node_id: str
    children: tuple["IndexNode", ...] = ()
    elements: tuple[str, ...] = ()
    centroid: Optional[tuple[float, ...]] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def iter_leaves(self) -> Iterator["IndexNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if node.children:
                stack.extend(reversed(node.children))
            else:
                yield node

    def depth(self) -> int:
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)


@dataclass(frozen=True)
class Index:
    root: IndexNode
    leaf_count: int
    dataset_size: int
    build_seconds: float = field(default=0.0, compare=False)

    def leaves(self) -> list[IndexNode]:
        return list(self.root.iter_leaves())

    def depth(self) -> int:
        return self.root.depth()

    def element_ids(self) -> list[str]:
        return [e for leaf in self.root.iter_leaves() for e in leaf.elements]

    def to_dict(self) -> dict:
        return {
            "version": INDEX_VERSION,
            "dataset_size": self.dataset_size,
            "leaf_count": self.leaf_count,
            "root": _node_to_dict(self.root),
        }

    @classmethod
    def from_dict(cls, data: object) -> "Index":
        return _index_from_dict(data)


# --------------------------------------------------------------------------
# k-means


def _as_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("vectors must share one dimensionality")
    if not np.all(np.isfinite(x)):
        raise ValueError("vectors must be finite")
    return x


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * (x @ centers.T) + (centers * centers).sum(1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _nearest(x: np.ndarray, centers: np.ndarray, chunk: int = 65536) -> np.ndarray:
    out = np.empty(len(x), dtype=np.int64)
    for lo in range(0, len(x), chunk):
        out[lo:lo + chunk] = _sq_distances(x[lo:lo + chunk], centers).argmin(1)
    return out


def _seed_centers(x: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(1)
    for _ in range(1, count):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # fewer distinct points than clusters
            pool = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(pool))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((x - x[nxt]) ** 2).sum(1))
    return x[chosen].copy()


def _repair_empty(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> None:
    count = len(centers)
    sizes = np.bincount(labels, minlength=count)
    for j in np.flatnonzero(sizes == 0):
        dist = ((x - centers[labels]) ** 2).sum(1)
        dist[sizes[labels] <= 1] = -1.0
        p = int(dist.argmax())
        sizes[labels[p]] -= 1
        labels[p] = j
        sizes[j] = 1
        centers[j] = x[p]


def _means(x: np.ndarray, labels: np.ndarray, count: int) -> np.ndarray:
    sums = np.zeros((count, x.shape[1]))
    np.add.at(sums, labels, x)
    return sums / np.bincount(labels, minlength=count)[:, None]


def kmeans_labels(x: np.ndarray, cluster_count: int, seed: int, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with k-means++ seeding; returns ``(centroids, labels)``."""
    n = len(x)
    if cluster_count < 1:
        raise ValueError("cluster_count must be positive")
    if cluster_count > n:
        raise ValueError(f"cannot form {cluster_count} clusters from {n} vectors")
    rng = np.random.default_rng(seed)
    centers = _seed_centers(x, cluster_count, rng)
    labels = _nearest(x, centers)
    _repair_empty(x, labels, centers)
    for _ in range(max_iter):
        centers = _means(x, labels, cluster_count)
        new = _nearest(x, centers)
        _repair_empty(x, new, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    return _means(x, labels, cluster_count), labels


def kmeans(vectors: Sequence[tuple[str, Sequence[float]]], cluster_count: int, seed: int = 0,
           max_iter: int = 100) -> list[Cluster]:
    """Partition ``(id, vector)`` pairs into exactly ``cluster_count`` non-empty clusters."""
    ids = [i for i, _ in vectors]
    x = _as_matrix([v for _, v in vectors])
    centers, labels = kmeans_labels(x, cluster_count, seed, max_iter)
    members: list[list[str]] = [[] for _ in range(cluster_count)]
    for i, lab in zip(ids, labels.tolist()):
        members[lab].append(i)
    return [Cluster(tuple(float(c) for c in centers[j]), members[j]) for j in range(cluster_count)]


# --------------------------------------------------------------------------
# agglomerative clustering


def hac_average_linkage(centroids: Sequence[Sequence[float]]) -> list[Merge]:
    """Average-linkage agglomerative clustering over centroids.

    Returns ``len(centroids) - 1`` merges in order. Leaves are numbered
    ``0..m-1`` and the cluster formed by merge ``i`` gets id ``m + i``.
    Equal-distance candidates are resolved by the smallest ``(min id, max id)``
    pair.
    """
    x = _as_matrix(centroids)
    m = len(x)
    if m == 0:
        raise ValueError("need at least one centroid")
    if m == 1:
        return []
    d = np.empty((m, m))
    for i in range(m):
        d[i] = np.sqrt(((x - x[i]) ** 2).sum(1))
    np.fill_diagonal(d, np.inf)
    slot_id = list(range(m))
    slot_size = [1] * m
    merges: list[Merge] = []
    for step in range(m - 1):
        dmin = d.min()
        cand = np.argwhere(np.triu(d == dmin, 1))
        best = min(cand.tolist(), key=lambda pq: tuple(sorted((slot_id[pq[0]], slot_id[pq[1]]))))
        p, q = sorted(best, key=lambda s: slot_id[s])
        a, b = slot_id[p], slot_id[q]
        na, nb = slot_size[p], slot_size[q]
        merged = (na * d[p] + nb * d[q]) / (na + nb)
        d[p, :] = merged
        d[:, p] = merged
        d[p, p] = np.inf
        d[q, :] = np.inf
        d[:, q] = np.inf
        slot_id[p] = m + step
        slot_size[p] = na + nb
        merges.append(Merge(a, b, float(dmin), na + nb))
    return merges


# --------------------------------------------------------------------------
# building


def _leaf_id(i: int) -> str:
    return f"leaf-{i:05d}"


def _internal_id(i: int) -> str:
    return f"node-{i:05d}"


def index_from_clusters(clusters: Sequence[Cluster]) -> Index:
    """Build the dendrogram over already-formed leaf clusters."""
    clusters = [c for c in clusters]
    if not clusters:
        raise ValueError("need at least one cluster")
    for c in clusters:
        if not c.members:
            raise ValueError("clusters must be non-empty")
    leaves = [
        IndexNode(_leaf_id(i), elements=tuple(c.members), centroid=tuple(float(v) for v in c.centroid))
        for i, c in enumerate(clusters)
    ]
    nodes: dict[int, IndexNode] = dict(enumerate(leaves))
    merges = hac_average_linkage([c.centroid for c in clusters])
    m = len(leaves)
    for step, merge in enumerate(merges):
        nodes[m + step] = IndexNode(_internal_id(step), children=(nodes.pop(merge.left), nodes.pop(merge.right)))
    root = nodes[m + len(merges) - 1] if merges else leaves[0]
    index = Index(root, m, sum(len(c.members) for c in clusters))
    _check_partition(index)
    return index


def index_from_partition(ids: Sequence[str], vectors: Sequence[Sequence[float]], labels: Sequence[int]) -> Index:
    """Index whose leaves are the given labelled groups; centroids are group means."""
    x = _as_matrix(vectors)
    groups: dict[int, list[int]] = {}
    for row, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(row)
    clusters = [
        Cluster(tuple(float(v) for v in x[rows].mean(0)), [ids[r] for r in rows])
        for _, rows in sorted(groups.items())
    ]
    return index_from_clusters(clusters)


def build_index(dataset: Sequence[tuple[str, Sequence[float]]], leaf_count: int,
                clustering_subsample: Optional[int] = None, seed: int = 0) -> Index:
    """Cluster ``(id, vector)`` pairs into ``leaf_count`` leaves and build the tree.

    With ``clustering_subsample`` set below the dataset size, k-means runs on
    a seeded subsample and every element is then assigned to its nearest
    centroid. A centroid that attracts no element in that final pass is
    dropped, so the leaf count can then be smaller than requested.
    """
    import time

    start = time.perf_counter()
    ids = [i for i, _ in dataset]
    if len(set(ids)) != len(ids):
        raise ValueError("element ids must be unique")
    x = _as_matrix([v for _, v in dataset])
    n = len(x)
    if leaf_count > n:
        raise ValueError(f"cannot form {leaf_count} clusters from {n} vectors")
    if clustering_subsample is not None and clustering_subsample < n:
        if clustering_subsample < leaf_count:
            raise ValueError("clustering_subsample must be at least leaf_count")
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(n, size=clustering_subsample, replace=False))
        centers, _ = kmeans_labels(x[rows], leaf_count, seed)
        labels = _nearest(x, centers)
    else:
        centers, labels = kmeans_labels(x, leaf_count, seed)
    members: list[list[str]] = [[] for _ in range(len(centers))]
    for i, lab in zip(ids, labels.tolist()):
        members[lab].append(i)
    clusters = [
        Cluster(tuple(float(v) for v in centers[j]), members[j]) for j in range(len(centers)) if members[j]
    ]
    index = index_from_clusters(clusters)
    return Index(index.root, index.leaf_count, index.dataset_size, time.perf_counter() - start)


def _check_partition(index: Index) -> None:
    seen: set[str] = set()
    total = 0
    for leaf in index.root.iter_leaves():
        total += len(leaf.elements)
        seen.update(leaf.elements)
    if len(seen) != total:
        raise ValueError("leaf element lists overlap")


# --------------------------------------------------------------------------
# persistence


def _node_to_dict(node: IndexNode) -> dict:
    if node.children:
        return {"node_id": node.node_id, "children": [_node_to_dict(c) for c in node.children]}
    return {"node_id": node.node_id, "elements": list(node.elements), "centroid": list(node.centroid or ())}


def _node_from_dict(data: object, path: str, seen_nodes: set, seen_elems: dict) -> IndexNode:
    if not isinstance(data, dict):
        raise IndexFormatError(f"{path}: node must be an object")
    node_id = data.get("node_id")
    if not isinstance(node_id, str) or not node_id:
        raise IndexFormatError(f"{path}: node_id must be a non-empty string")
    if node_id in seen_nodes:
        raise IndexFormatError(f"{path}: duplicate node_id {node_id!r}")
    seen_nodes.add(node_id)
    children = data.get("children")
    elements = data.get("elements")
    if children and elements:
        raise IndexFormatError(f"{path}: node has both children and elements")
    if children:
        if not isinstance(children, list):
            raise IndexFormatError(f"{path}.children: must be a list")
        kids = tuple(
            _node_from_dict(c, f"{path}.children[{i}]", seen_nodes, seen_elems) for i, c in enumerate(children)
        )
        return IndexNode(node_id, children=kids)
    if not elements:
        raise IndexFormatError(f"{path}: node has neither children nor elements")
    if not isinstance(elements, list):
        raise IndexFormatError(f"{path}.elements: must be a list")
    for i, e in enumerate(elements):
        if not isinstance(e, str) or not e:
            raise IndexFormatError(f"{path}.elements[{i}]: element id must be a non-empty string")
        if e in seen_elems:
            raise IndexFormatError(f"{path}.elements[{i}]: duplicate element id {e!r} (also in {seen_elems[e]})")
        seen_elems[e] = path
    centroid = data.get("centroid")
    if not isinstance(centroid, list) or not centroid:
        raise IndexFormatError(f"{path}.centroid: leaf needs a non-empty centroid list")
    for c in centroid:
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c):
            raise IndexFormatError(f"{path}.centroid: components must be finite numbers")
    return IndexNode(node_id, elements=tuple(elements), centroid=tuple(float(c) for c in centroid))


def _index_from_dict(data: object) -> Index:
    if not isinstance(data, dict):
        raise IndexFormatError("index: top level must be an object")
    if data.get("version") != INDEX_VERSION:
        raise IndexFormatError(f"index.version: expected {INDEX_VERSION}, got {data.get('version')!r}")
    seen_elems: dict[str, str] = {}
    root = _node_from_dict(data.get("root"), "root", set(), seen_elems)
    leaf_count = sum(1 for _ in root.iter_leaves())
    if data.get("leaf_count") != leaf_count:
        raise IndexFormatError(f"index.leaf_count: file says {data.get('leaf_count')!r}, tree has {leaf_count}")
    if data.get("dataset_size") != len(seen_elems):
        raise IndexFormatError(
            f"index.dataset_size: file says {data.get('dataset_size')!r}, leaves hold {len(seen_elems)}"
        )
    return Index(root, leaf_count, len(seen_elems))


def dumps_index(index: Index) -> str:
    return json.dumps(index.to_dict(), separators=(",", ":")) + "\n"


def save_index(index: Index, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_index(index))


def load_index(path: str | os.PathLike) -> Index:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IndexFormatError(f"index: malformed JSON ({exc})") from exc
    return _index_from_dict(data)
