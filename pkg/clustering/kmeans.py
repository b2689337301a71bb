"""
Seeded k-means over document embeddings.

Rows are processed in sorted document-id order, k-means++ draws from one
``numpy.random.Generator`` seeded with ``seed`` and centroid sums are
accumulated in that same order, so a fit is a pure function of
``(X, k, seed)``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from core.artifacts import (
    FORMAT_VERSION,
    check_format,
    read_json,
    read_matrix,
    write_json,
    write_matrix,
)
from core.exceptions import ConfigError, DataError, StageError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6
MONOTONE_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    ids: tuple
    centroids: np.ndarray
    labels: np.ndarray
    distances: np.ndarray
    inertia: float
    iterations_run: int
    converged: bool
    seed: int
    inertia_history: tuple = ()
    _members: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        members = {cluster: [] for cluster in range(self.k)}
        for doc_id, cluster in zip(self.ids, self.labels):
            members[int(cluster)].append(doc_id)
        object.__setattr__(self, "_members", {c: tuple(m) for c, m in members.items()})

    @property
    def assignment(self):
        return {doc_id: int(c) for doc_id, c in zip(self.ids, self.labels)}

    @property
    def distance(self):
        return {doc_id: float(d) for doc_id, d in zip(self.ids, self.distances)}

    def members(self, cluster):
        if not 0 <= cluster < self.k:
            raise DataError(f"Cluster index {cluster} outside 0..{self.k - 1}.")
        return self._members[cluster]

    def sizes(self):
        return [len(self._members[c]) for c in range(self.k)]

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix(directory / "centroids.f32", self.centroids)
        with open(directory / "assignments.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["doc_id", "cluster", "distance"])
            for doc_id, cluster, distance in zip(self.ids, self.labels, self.distances):
                writer.writerow([doc_id, int(cluster), repr(float(distance))])
        write_json(
            directory / "meta.json",
            {
                "format_version": FORMAT_VERSION,
                "kind": "clusters",
                "k": self.k,
                "dim": int(self.centroids.shape[1]),
                "rows": len(self.ids),
                "inertia": self.inertia,
                "iterations_run": self.iterations_run,
                "converged": self.converged,
                "seed": self.seed,
                "inertia_history": list(self.inertia_history),
            },
        )
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "meta.json", "cluster")
        check_format(meta, directory)
        ids, labels, distances = [], [], []
        with open(directory / "assignments.csv", newline="", encoding="utf-8") as handle:
            for row in csv.DictReader(handle):
                ids.append(row["doc_id"])
                labels.append(int(row["cluster"]))
                distances.append(float(row["distance"]))
        return cls(
            k=meta["k"],
            ids=ids,
            centroids=read_matrix(directory / "centroids.f32", meta["k"], meta["dim"], "cluster"),
            labels=np.array(labels, dtype=np.int64),
            distances=np.array(distances),
            inertia=meta["inertia"],
            iterations_run=meta["iterations_run"],
            converged=meta["converged"],
            seed=meta["seed"],
            inertia_history=tuple(meta["inertia_history"]),
        )


def kmeans_plusplus(X, k, rng):
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(X, X[chosen], "sqeuclidean")[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        index = int(rng.choice(n, p=closest / total))
        chosen.append(index)
        closest = np.minimum(closest, cdist(X, X[[index]], "sqeuclidean")[:, 0])
    return X[chosen].copy()


def _assign(X, centroids):
    squared = cdist(X, centroids, "sqeuclidean")
    # argmin returns the lowest index among ties
    labels = np.argmin(squared, axis=1)
    return labels, squared


def _repair_empty(X, labels, centroids, squared):
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    for cluster in np.flatnonzero(counts == 0):
        own = squared[np.arange(len(labels)), labels]
        # moving a sole member would empty its cluster
        own[counts[labels] <= 1] = -1.0
        farthest = int(np.argmax(own))
        logger.debug("Re-seeding empty cluster %d with row %d", cluster, farthest)
        counts[labels[farthest]] -= 1
        counts[cluster] += 1
        labels[farthest] = cluster
        centroids[cluster] = X[farthest]
        squared[:, cluster] = cdist(X, X[[farthest]], "sqeuclidean")[:, 0]
    return labels, centroids, squared


def _assign_nonempty(X, centroids):
    """
    Nearest-centroid assignment with no empty cluster. A re-seeded centroid
    can pull other points closer than their own, so every repair is followed
    by a fresh assignment.
    """
    k = centroids.shape[0]
    labels, squared = _assign(X, centroids)
    for _ in range(k):
        if np.bincount(labels, minlength=k).min() > 0:
            return labels, centroids, squared
        labels, centroids, squared = _repair_empty(X, labels, centroids, squared)
        labels, squared = _assign(X, centroids)
    if np.bincount(labels, minlength=k).min() == 0:
        # coinciding centroids keep stealing each other's points
        labels, centroids, squared = _repair_empty(X, labels, centroids, squared)
    return labels, centroids, squared


def _update(X, labels, k):
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k)
    return sums / counts[:, np.newaxis]


def kmeans_fit(X, k, seed, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL) -> ClusterModel:
    """
    Lloyd iterations from a k-means++ start until the assignment is a fixed
    point, the relative inertia change drops below ``tol`` or ``max_iter`` is
    reached. ``X`` is an :class:`~embedding.matrix.EmbeddingMatrix`.
    """
    if k < 2:
        raise ConfigError(f"K must be >= 2, got {k}.")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}.")

    ids = sorted(X.ids)
    points = X.rows(ids)
    distinct = np.unique(points, axis=0).shape[0] if len(ids) else 0
    if distinct < k:
        raise DataError(f"Only {distinct} distinct vectors for K={k} clusters.")

    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(points, k, rng)
    labels, centroids, squared = _assign_nonempty(points, centroids)
    rows = np.arange(len(ids))
    inertia = float(squared[rows, labels].sum())
    history = [inertia]

    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _update(points, labels, k)
        new_labels, centroids, squared = _assign_nonempty(points, centroids)
        new_inertia = float(squared[rows, new_labels].sum())
        if new_inertia > inertia * (1 + MONOTONE_SLACK) + MONOTONE_SLACK:
            raise StageError(
                f"k-means inertia rose from {inertia} to {new_inertia} at iteration {iterations}.",
                stage="cluster",
            )
        history.append(new_inertia)
        fixed_point = np.array_equal(new_labels, labels)
        change = (inertia - new_inertia) / inertia if inertia > 0 else 0.0
        labels, inertia = new_labels, new_inertia
        if fixed_point or change < tol:
            converged = True
            break

    if not converged:
        logger.warning("k-means K=%d seed=%d stopped at max_iter=%d", k, seed, max_iter)
    logger.debug(
        "k-means K=%d seed=%d inertia %.6f after %d iterations", k, seed, inertia, iterations
    )
    return ClusterModel(
        k=k,
        ids=ids,
        centroids=centroids,
        labels=labels,
        distances=np.sqrt(np.maximum(squared[rows, labels], 0.0)),
        inertia=inertia,
        iterations_run=iterations,
        converged=converged,
        seed=seed,
        inertia_history=tuple(history),
    )


def rank_by_centroid_distance(model: ClusterModel, cluster):
    """Members of ``cluster`` nearest first, ties by document id."""
    distance = model.distance
    return sorted(model.members(cluster), key=lambda doc_id: (distance[doc_id], doc_id))
