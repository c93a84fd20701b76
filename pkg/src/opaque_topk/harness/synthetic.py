"""Synthetic clustered data and dataset CSV files."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SyntheticSpec:
    cluster_count: int = 20
    samples_per_cluster: int = 2500
    mu_range: tuple[float, float] = (0.0, 20.0)
    sigma_max: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.cluster_count < 1 or self.samples_per_cluster < 1:
            raise ValueError("cluster_count and samples_per_cluster must be positive")
        if not self.sigma_max > 0:
            raise ValueError("sigma_max must be positive")


@dataclass
class Dataset:
    ids: list[str]
    vectors: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim == 1:
            self.vectors = self.vectors[:, None]
        if len(self.ids) != len(self.vectors):
            raise ValueError("ids and vectors differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("element ids must be unique")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if len(self.labels) != len(self.ids):
                raise ValueError("labels and ids differ in length")

    def __len__(self) -> int:
        return len(self.ids)

    def pairs(self) -> list[tuple[str, list[float]]]:
        return list(zip(self.ids, self.vectors.tolist()))

    def payloads(self) -> dict[str, tuple[float, ...]]:
        return {i: tuple(v) for i, v in zip(self.ids, self.vectors.tolist())}


def gen_synthetic(spec: SyntheticSpec) -> Dataset:
    """Normal clusters with mean ~ U[mu_range] and sd ~ U(0, sigma_max].

    The one-dimensional vector is the raw draw; scorers see it as payload.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.mu_range
    mus = rng.uniform(lo, hi, spec.cluster_count)
    sigmas = spec.sigma_max * (1.0 - rng.random(spec.cluster_count))
    m = spec.samples_per_cluster
    values = np.concatenate([rng.normal(mu, sd, m) for mu, sd in zip(mus, sigmas)])
    labels = np.repeat(np.arange(spec.cluster_count), m)
    width = len(str(len(values) - 1))
    ids = [f"e{i:0{width}d}" for i in range(len(values))]
    return Dataset(ids, values[:, None], labels)


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    dim = dataset.vectors.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["id"] + (["label"] if dataset.labels is not None else []) + [f"x{j}" for j in range(dim)]
        w.writerow(header)
        for r, (i, vec) in enumerate(zip(dataset.ids, dataset.vectors.tolist())):
            row = [i] + ([int(dataset.labels[r])] if dataset.labels is not None else []) + [repr(v) for v in vec]
            w.writerow(row)


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ValueError(f"{path}: first column must be 'id'")
        has_label = len(header) > 1 and header[1] == "label"
        first = 2 if has_label else 1
        if len(header) <= first:
            raise ValueError(f"{path}: no vector columns")
        ids, labels, rows = [], [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            if has_label:
                labels.append(int(row[1]))
            rows.append([float(v) for v in row[first:]])
    return Dataset(ids, np.asarray(rows, dtype=float), np.asarray(labels) if has_label else None)


def gen_no_signal(cluster_count: int, samples_per_cluster: int, mu: float = 10.0, sigma: float = 3.0,
                  seed: int = 0) -> Dataset:
    """Clusters that are i.i.d. draws from one normal distribution.

    Labels are a seeded random balanced assignment, so no cluster carries
    information about its scores.
    """
    if cluster_count < 1 or samples_per_cluster < 1:
        raise ValueError("cluster_count and samples_per_cluster must be positive")
    rng = np.random.default_rng(seed)
    n = cluster_count * samples_per_cluster
    values = rng.normal(mu, sigma, n)
    labels = rng.permutation(np.repeat(np.arange(cluster_count), samples_per_cluster))
    width = len(str(n - 1))
    ids = [f"e{i:0{width}d}" for i in range(n)]
    return Dataset(ids, values[:, None], labels)
