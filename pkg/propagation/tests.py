from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from clustering.kmeans import ClusterModel
from core.exceptions import ConfigError
from corpus.documents import Corpus, Document, LabelState
from embedding.backends import EmbeddingSettings, embed_corpus
from embedding.matrix import EmbeddingMatrix
from propagation.augmentation import augment, clustering_input
from propagation.rules import (
    Decision,
    Neighborhood,
    PropagationParams,
    propagate,
    retained_count,
    select_neighborhood,
)
from synthgen.generator import generate
from synthgen.presets import get_preset


def one_cluster(n):
    ids = [f"m{i:02d}" for i in range(n)]
    return ClusterModel(
        k=1,
        ids=ids,
        centroids=np.zeros((1, 2)),
        labels=np.zeros(n, dtype=np.int64),
        distances=np.arange(n) / n,
        inertia=0.0,
        iterations_run=1,
        converged=True,
        seed=0,
    )


def neighborhood(values):
    labels = {f"m{i}": value for i, value in enumerate(values)}
    members = tuple(labels)
    nbhd = Neighborhood(
        cluster=0,
        size=len(members),
        members=members,
        positives=values.count(1),
        negatives=values.count(0),
        unlabeled=values.count(None),
    )
    return nbhd, labels


def random_corpus(rng, goal="g"):
    n = int(rng.integers(30, 201))
    vectors = rng.normal(size=(n, 4))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    docs, ids = [], []
    for i in range(n):
        doc_id = f"d{i:03d}"
        draw = rng.random()
        labels = {goal: LabelState(int(draw < 0.15))} if draw < 0.35 else {}
        docs.append(Document(id=doc_id, raw_text="", clean_text="", labels=labels))
        ids.append(doc_id)
    corpus = Corpus(documents=docs, goals=[goal])
    return corpus, EmbeddingMatrix(ids=ids, vectors=vectors, backend="tfidf")


def brute_force(model, corpus, goal, radius, threshold):
    """Rank-radius and inclusive-threshold rule written out directly."""
    expected = {}
    distance = model.distance
    for cluster in range(model.k):
        members = [doc_id for doc_id, c in model.assignment.items() if c == cluster]
        members.sort(key=lambda doc_id: (distance[doc_id], doc_id))
        kept = members[: max(1, len(members) * radius // 100)]
        values = [corpus.get(doc_id).original_value(goal) for doc_id in kept]
        positives, negatives = values.count(1), values.count(0)
        if positives + negatives == 0:
            continue
        value = int(100 * positives >= threshold * (positives + negatives))
        for doc_id, seen in zip(kept, values):
            if seen is None:
                expected[doc_id] = value
    return expected


class ParamsTests(SimpleTestCase):
    def test_valid(self):
        params = PropagationParams(25, 10, 70)
        self.assertEqual(params.to_dict(), {"clusters": 25, "radius_pct": 10, "threshold_pct": 70})

    def test_invalid(self):
        for args in ((1, 10, 50), (5, 0, 50), (5, 101, 50), (5, 10, 0), (5, 10, 100), (2.5, 10, 50)):
            with self.subTest(args=args), self.assertRaises(ConfigError):
                PropagationParams(*args)


class SelectNeighborhoodTests(SimpleTestCase):
    def test_ten_percent_of_forty(self):
        nbhd = select_neighborhood(one_cluster(40), 0, 10)
        self.assertEqual(nbhd.members, ("m00", "m01", "m02", "m03"))
        self.assertEqual(nbhd.size, 40)

    def test_full_radius(self):
        self.assertEqual(len(select_neighborhood(one_cluster(40), 0, 100).members), 40)

    def test_keeps_at_least_one(self):
        self.assertEqual(select_neighborhood(one_cluster(3), 0, 5).members, ("m00",))

    def test_counts(self):
        labels = {"m00": 1, "m01": 0, "m02": None}
        nbhd = select_neighborhood(one_cluster(10), 0, 30, labels)
        self.assertEqual((nbhd.positives, nbhd.negatives, nbhd.unlabeled), (1, 1, 1))

    def test_radius_monotone(self):
        model = one_cluster(37)
        previous = set()
        for radius in (1, 5, 10, 25, 50, 99, 100):
            members = set(select_neighborhood(model, 0, radius).members)
            self.assertLessEqual(previous, members)
            previous = members

    def test_retained_count_is_exact(self):
        self.assertEqual(retained_count(100, 7), 7)
        self.assertEqual(retained_count(1000, 0.7), 7)


class PropagateTests(SimpleTestCase):
    def test_majority_positive(self):
        nbhd, labels = neighborhood([1, 1, 1, 0, None, None])
        outcome = propagate(nbhd, labels, 50)
        self.assertEqual(outcome.decision, Decision.PROPAGATE_1)
        self.assertEqual(outcome.proportion, Fraction(3, 4))
        self.assertEqual(dict(outcome.assignments), {"m4": 1, "m5": 1})

    def test_boundary_is_inclusive(self):
        nbhd, labels = neighborhood([1, 1, 0, 0, None])
        outcome = propagate(nbhd, labels, 50)
        self.assertEqual(outcome.decision, Decision.PROPAGATE_1)
        self.assertEqual(dict(outcome.assignments), {"m4": 1})

    def test_below_threshold(self):
        nbhd, labels = neighborhood([1, 1, 0, 0, None])
        outcome = propagate(nbhd, labels, 60)
        self.assertEqual(outcome.decision, Decision.PROPAGATE_0)
        self.assertEqual(dict(outcome.assignments), {"m4": 0})

    def test_no_labeled_members(self):
        nbhd, labels = neighborhood([None] * 4)
        outcome = propagate(nbhd, labels, 50)
        self.assertEqual(outcome.decision, Decision.SKIP)
        self.assertIsNone(outcome.proportion)
        self.assertEqual(dict(outcome.assignments), {})

    def test_threshold_monotone(self):
        rng = np.random.default_rng(0)
        choices = [0, 1, None]
        for _ in range(200):
            values = [choices[i] for i in rng.integers(0, 3, size=int(rng.integers(1, 12)))]
            nbhd, labels = neighborhood(values)
            decisions = [propagate(nbhd, labels, t).decision for t in (10, 30, 50, 60, 70, 90)]
            for low, high in zip(decisions, decisions[1:]):
                self.assertFalse(
                    low is Decision.PROPAGATE_0 and high is Decision.PROPAGATE_1
                )


class ClusteringInputTests(SimpleTestCase):
    def setUp(self):
        docs = [
            Document(id="a", raw_text="", clean_text="", labels={"g": LabelState(1)}),
            Document(id="b", raw_text="", clean_text="", labels={"g": LabelState(0)}),
            Document(id="c", raw_text="", clean_text=""),
            Document(id="z", raw_text="", clean_text=""),
            Document(id="h", raw_text="", clean_text="", labels={"g": LabelState(0)}),
            Document(
                id="a#r1",
                raw_text="",
                clean_text="",
                labels={"g": LabelState(1)},
                replica_of="a",
            ),
        ]
        self.corpus = Corpus(documents=docs, goals=["g"])
        self.embeddings = EmbeddingMatrix(
            ids=["a", "b", "c", "z", "h"],
            vectors=[[1, 0], [0, 1], [0.6, 0.8], [0, 0], [0.8, 0.6]],
            backend="tfidf",
        )

    def test_rows_and_labels(self):
        inputs = clustering_input(
            self.corpus, self.embeddings, "g", masked=["b"], excluded=["h"]
        )
        self.assertEqual(inputs.matrix.ids, ("a", "b", "c", "a#r1"))
        np.testing.assert_array_equal(inputs.matrix.vector("a#r1"), [1.0, 0.0])
        self.assertEqual(inputs.labels, {"a": 1, "b": None, "c": None, "a#r1": 1})
        self.assertEqual(inputs.eligible, frozenset({"b", "c"}))
        self.assertEqual(inputs.dropped, ("z",))


class AugmentTests(SimpleTestCase):
    def test_matches_brute_force(self):
        rng = np.random.default_rng(42)
        for trial in range(50):
            corpus, embeddings = random_corpus(rng)
            params = PropagationParams(
                clusters=int(rng.integers(2, 6)),
                radius_pct=int(rng.choice([5, 10, 25, 50, 100])),
                threshold_pct=int(rng.choice([50, 60, 70])),
            )
            result = augment(corpus, embeddings, params, "g", seed=trial)
            expected = brute_force(result.model, corpus, "g", params.radius_pct, params.threshold_pct)
            with self.subTest(trial=trial):
                self.assertEqual(dict(result.assignments), expected)
                for doc in result.corpus:
                    state = doc.label("g")
                    if doc.id in expected:
                        self.assertTrue(state.is_synthetic)
                        self.assertEqual(state.value, expected[doc.id])
                    else:
                        self.assertEqual(state, corpus.get(doc.id).label("g"))

    def test_conservation(self):
        rng = np.random.default_rng(7)
        corpus, embeddings = random_corpus(rng)
        result = augment(corpus, embeddings, PropagationParams(3, 100, 50), "g", seed=1)
        before, after = corpus.label_tally("g"), result.corpus.label_tally("g")
        self.assertEqual((before.original_0, before.original_1), (after.original_0, after.original_1))
        self.assertEqual(after.synthetic_1, result.report.synthetic_1)
        self.assertEqual(after.synthetic_0, result.report.synthetic_0)
        self.assertEqual(after.total_1, after.original_1 + after.synthetic_1)
        self.assertEqual(after.unlabeled, before.unlabeled - len(result.assignments))

    def test_deterministic(self):
        corpus, embeddings = random_corpus(np.random.default_rng(3))
        params = PropagationParams(4, 25, 60)
        a = augment(corpus, embeddings, params, "g", seed=9)
        b = augment(corpus, embeddings, params, "g", seed=9)
        self.assertEqual(dict(a.assignments), dict(b.assignments))
        self.assertEqual(a.report.to_dict(), b.report.to_dict())

    def test_nothing_unlabeled(self):
        docs = [
            Document(id=f"d{i}", raw_text="", clean_text="", labels={"g": LabelState(i % 2)})
            for i in range(6)
        ]
        corpus = Corpus(documents=docs, goals=["g"])
        vectors = np.random.default_rng(0).normal(size=(6, 3))
        embeddings = EmbeddingMatrix(
            ids=corpus.ids,
            vectors=vectors / np.linalg.norm(vectors, axis=1, keepdims=True),
            backend="tfidf",
        )
        result = augment(corpus, embeddings, PropagationParams(2, 100, 50), "g", seed=0)
        self.assertIs(result.corpus, corpus)
        self.assertEqual(result.report.synthetic_0 + result.report.synthetic_1, 0)
        self.assertTrue(result.report.warnings)

    def test_report_shape(self):
        corpus, embeddings = random_corpus(np.random.default_rng(5))
        report = augment(corpus, embeddings, PropagationParams(3, 50, 50), "g", seed=2).report
        data = report.to_dict()
        self.assertEqual(set(data), {"goal", "params", "clusters", "totals", "warnings"})
        self.assertEqual(len(data["clusters"]), 3)
        self.assertEqual(
            set(data["clusters"][0]), {"id", "size", "retained", "p", "decision", "assigned"}
        )
        self.assertEqual(
            sum(c["assigned"] for c in data["clusters"]),
            data["totals"]["synthetic_0"] + data["totals"]["synthetic_1"],
        )

    def test_two_topic_corpus_follows_topics(self):
        corpus, truth = generate(get_preset("sep2"))
        embeddings = embed_corpus(corpus, EmbeddingSettings(projection_dim=128), seed=0)
        result = augment(corpus, embeddings, PropagationParams(2, 100, 50), "g1", seed=0)
        unlabeled = [doc.id for doc in corpus if not doc.label("g1").is_labeled]
        self.assertEqual(set(result.assignments), set(unlabeled))
        agree = sum(result.assignments[doc_id] == truth.label(doc_id, "g1") for doc_id in unlabeled)
        self.assertGreaterEqual(agree / len(unlabeled), 0.95)
        expected = brute_force(result.model, corpus, "g1", 100, 50)
        self.assertEqual(dict(result.assignments), expected)
