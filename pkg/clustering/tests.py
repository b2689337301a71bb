import itertools
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from clustering.kmeans import (
    ClusterModel,
    _assign_nonempty,
    kmeans_fit,
    rank_by_centroid_distance,
)
from core.exceptions import ConfigError, DataError
from embedding.matrix import EmbeddingMatrix


def matrix(points, prefix="p", normalized=False):
    points = np.asarray(points, dtype=np.float64)
    ids = [f"{prefix}{i}" for i in range(len(points))]
    return EmbeddingMatrix(ids=ids, vectors=points, backend="tfidf", normalized=normalized)


def unit_rows(n, dim, seed):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(n, dim))
    return points / np.linalg.norm(points, axis=1, keepdims=True)


def brute_force_inertia(points, k):
    best = np.inf
    for labels in itertools.product(range(k), repeat=len(points)):
        labels = np.array(labels)
        if len(set(labels.tolist())) < k:
            continue
        total = 0.0
        for cluster in range(k):
            members = points[labels == cluster]
            total += ((members - members.mean(axis=0)) ** 2).sum()
        best = min(best, total)
    return best


class KMeansFitTests(SimpleTestCase):
    four = matrix([(0, 0), (0, 1), (10, 0), (10, 1)])

    def test_four_points(self):
        model = min(
            (kmeans_fit(self.four, 2, seed) for seed in range(10)),
            key=lambda m: m.inertia,
        )
        self.assertAlmostEqual(model.inertia, 1.0)
        assignment = model.assignment
        self.assertEqual(assignment["p0"], assignment["p1"])
        self.assertEqual(assignment["p2"], assignment["p3"])
        self.assertNotEqual(assignment["p0"], assignment["p2"])
        centroids = sorted(map(tuple, model.centroids.round(9)))
        self.assertEqual(centroids, [(0.0, 0.5), (10.0, 0.5)])

    def test_one_cluster_per_point(self):
        points = unit_rows(6, 3, seed=1)
        model = kmeans_fit(matrix(points), 6, seed=0)
        self.assertAlmostEqual(model.inertia, 0.0)
        self.assertEqual(sorted(model.sizes()), [1] * 6)

    def test_deterministic(self):
        X = matrix(unit_rows(200, 8, seed=2))
        a = kmeans_fit(X, 5, seed=7)
        b = kmeans_fit(X, 5, seed=7)
        np.testing.assert_array_equal(a.labels, b.labels)
        self.assertEqual(a.centroids.tobytes(), b.centroids.tobytes())

    def test_row_order_does_not_matter(self):
        points = unit_rows(50, 4, seed=3)
        forward = matrix(points)
        backward = EmbeddingMatrix(
            ids=list(reversed(forward.ids)), vectors=points[::-1], backend="tfidf"
        )
        a = kmeans_fit(forward, 3, seed=1)
        b = kmeans_fit(backward, 3, seed=1)
        self.assertEqual(a.assignment, b.assignment)

    def test_too_few_distinct_points(self):
        X = matrix([(1, 0), (1, 0), (0, 1)])
        with self.assertRaises(DataError):
            kmeans_fit(X, 3, seed=0)

    def test_k_below_two(self):
        with self.assertRaises(ConfigError):
            kmeans_fit(self.four, 1, seed=0)

    def test_inertia_non_increasing(self):
        model = kmeans_fit(matrix(unit_rows(300, 6, seed=4)), 8, seed=3)
        history = np.array(model.inertia_history)
        self.assertTrue(np.all(np.diff(history) <= 1e-9 * history[:-1]))
        self.assertEqual(len(history), model.iterations_run + 1)

    def test_inertia_non_increasing_across_random_embeddings(self):
        for instance in range(20):
            with self.subTest(instance=instance):
                rng = np.random.default_rng(500 + instance)
                n, dim, k = rng.integers(20, 120), rng.integers(2, 10), rng.integers(2, 9)
                X = matrix(unit_rows(int(n), int(dim), seed=500 + instance))
                model = kmeans_fit(X, int(k), seed=instance)
                history = np.array(model.inertia_history)
                self.assertTrue(np.all(np.diff(history) <= 1e-9 * history[:-1]))

    def test_repair_reassigns_points_near_reseeded_centroid(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [9.0, 0.0], [10.0, 0.0]])
        centroids = np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 0.0]])
        labels, centroids, _ = _assign_nonempty(points, centroids)
        # the farthest point re-seeds the empty cluster and its neighbour follows
        np.testing.assert_array_equal(labels, [0, 1, 2, 2])
        np.testing.assert_array_equal(centroids[2], [10.0, 0.0])

    def test_early_stop_keeps_nearest_assignment(self):
        for seed in range(10):
            X = matrix(unit_rows(25, 2, seed=seed))
            model = kmeans_fit(X, 12, seed=seed, tol=1.0)
            with self.subTest(seed=seed):
                points = X.rows(model.ids)
                distances = np.linalg.norm(
                    points[:, None, :] - model.centroids[None, :, :], axis=2
                )
                own = distances[np.arange(len(points)), model.labels]
                self.assertTrue(np.all(own <= distances.min(axis=1) + 1e-9))
                self.assertTrue(all(size > 0 for size in model.sizes()))

    def test_assignment_and_inertia_consistent(self):
        X = matrix(unit_rows(300, 6, seed=5))
        model = kmeans_fit(X, 8, seed=0)
        self.assertTrue(model.converged)
        points = X.rows(model.ids)
        distances = np.linalg.norm(points[:, None, :] - model.centroids[None, :, :], axis=2)
        own = distances[np.arange(len(points)), model.labels]
        self.assertTrue(np.all(own <= distances.min(axis=1) + 1e-9))
        recomputed = (own**2).sum()
        self.assertLess(abs(recomputed - model.inertia), 1e-6 * recomputed)
        np.testing.assert_allclose(model.distances, own, atol=1e-9)

    def test_every_cluster_nonempty(self):
        model = kmeans_fit(matrix(unit_rows(40, 2, seed=6)), 10, seed=2)
        self.assertTrue(all(size > 0 for size in model.sizes()))

    def test_matches_brute_force_optimum(self):
        for instance in range(4):
            points = np.random.default_rng(100 + instance).normal(size=(7, 2))
            for k in (2, 3):
                best = min(
                    kmeans_fit(matrix(points), k, seed, tol=0.0).inertia for seed in range(50)
                )
                optimum = brute_force_inertia(points, k)
                self.assertAlmostEqual(best, optimum, delta=1e-9 * max(1.0, optimum))

    def test_save_and_load(self):
        model = kmeans_fit(matrix(unit_rows(30, 4, seed=7)), 3, seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = ClusterModel.load(model.save(Path(tmp) / "k3"))
        self.assertEqual(loaded.assignment, model.assignment)
        self.assertEqual(loaded.distance, model.distance)
        self.assertEqual(loaded.inertia, model.inertia)
        self.assertEqual(loaded.inertia_history, model.inertia_history)


class RankTests(SimpleTestCase):
    def model(self, ids, distances):
        return ClusterModel(
            k=1,
            ids=ids,
            centroids=np.zeros((1, 2)),
            labels=np.zeros(len(ids), dtype=np.int64),
            distances=np.array(distances),
            inertia=float(np.square(distances).sum()),
            iterations_run=1,
            converged=True,
            seed=0,
        )

    def test_sorted_by_distance(self):
        model = self.model(["a", "b", "c"], [0.5, 0.2, 0.9])
        self.assertEqual(rank_by_centroid_distance(model, 0), ["b", "a", "c"])

    def test_ties_by_id(self):
        model = self.model(["y", "x"], [0.3, 0.3])
        self.assertEqual(rank_by_centroid_distance(model, 0), ["x", "y"])

    def test_invalid_cluster(self):
        with self.assertRaises(DataError):
            rank_by_centroid_distance(self.model(["a"], [0.1]), 1)

    def test_matches_recomputed_order(self):
        X = matrix(unit_rows(1000, 8, seed=8), prefix="doc")
        model = kmeans_fit(X, 5, seed=3)
        for cluster in range(model.k):
            members = model.members(cluster)
            vectors = X.rows(members)
            distances = np.linalg.norm(vectors - model.centroids[cluster], axis=1)
            expected = [
                doc_id for _, doc_id in sorted(zip(distances.tolist(), members))
            ]
            self.assertEqual(rank_by_centroid_distance(model, cluster), expected)
