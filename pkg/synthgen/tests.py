import json
import tempfile
from collections import Counter
from pathlib import Path

from django.test import SimpleTestCase

from clustering.kmeans import kmeans_fit
from core.exceptions import ConfigError
from embedding.backends import EmbeddingSettings, embed_corpus
from synthgen.generator import SyntheticSpec, generate, private_token, write_synthetic
from synthgen.presets import PRESETS, get_preset


def tiny_spec(**kwargs):
    options = {
        "docs_per_topic": (30, 20),
        "private_vocab": 20,
        "shared_vocab": 20,
        "doc_length": (10, 15),
        "labeled_fraction": 0.2,
    }
    options.update(kwargs)
    return SyntheticSpec(**options)


class SyntheticSpecTests(SimpleTestCase):
    def test_rejects_out_of_range_knobs(self):
        for kwargs in (
            {"labeled_fraction": 0},
            {"labeled_fraction": 1.5},
            {"noise": 0.5},
            {"separability": 0},
            {"doc_length": (10, 5)},
            {"docs_per_topic": (10, 0)},
            {"positive_topics": {"g1": (2,)}},
        ):
            with self.subTest(kwargs=kwargs), self.assertRaises(ConfigError):
                tiny_spec(**kwargs)

    def test_presets(self):
        self.assertEqual(sorted(PRESETS), ["sep2", "sep2-imbalanced", "sep5-noisy"])
        self.assertEqual(get_preset("sep2", seed=3).seed, 3)
        with self.assertRaises(ConfigError):
            get_preset("sep3")


class GenerateTests(SimpleTestCase):
    def test_labeled_fraction_per_topic(self):
        corpus, truth = generate(tiny_spec())
        labeled = Counter(truth.topics[doc.id] for doc in corpus.labeled("g1"))
        self.assertEqual(labeled, {0: 6, 1: 4})
        self.assertEqual(len(truth.topics), 50)

    def test_sep2_counts(self):
        corpus, truth = generate(get_preset("sep2"))
        tally = corpus.label_tally("g1")
        self.assertEqual(len(corpus), 1000)
        self.assertEqual(tally.original_0 + tally.original_1, 100)
        self.assertEqual(tally.unlabeled, 900)
        self.assertEqual((tally.original_0, tally.original_1), (50, 50))
        positives = sum(labels["g1"] for labels in truth.labels.values())
        self.assertEqual(positives, 500)

    def test_imbalanced_preset(self):
        corpus, _ = generate(get_preset("sep2-imbalanced"))
        tally = corpus.label_tally("g1")
        self.assertEqual((tally.original_0, tally.original_1), (190, 10))

    def test_labels_match_truth_without_noise(self):
        corpus, truth = generate(tiny_spec())
        for doc in corpus.labeled("g1"):
            self.assertEqual(doc.original_value("g1"), truth.label(doc.id, "g1"))

    def test_noise_flips_some_labels(self):
        corpus, truth = generate(tiny_spec(docs_per_topic=(200, 200), labeled_fraction=1, noise=0.3))
        flipped = sum(
            doc.original_value("g1") != truth.label(doc.id, "g1") for doc in corpus.labeled("g1")
        )
        self.assertGreater(flipped, 0)
        self.assertLess(flipped, 200)

    def test_full_separability_uses_private_tokens_only(self):
        corpus, truth = generate(tiny_spec(separability=1.0))
        for doc in corpus:
            topic = truth.topics[doc.id]
            private = {private_token(topic, i) for i in range(20)}
            self.assertTrue(set(doc.clean_text.split()) <= private)

    def test_full_separability_clusters_recover_topics(self):
        spec = tiny_spec(docs_per_topic=(60, 60), doc_length=(20, 30), separability=1.0)
        corpus, truth = generate(spec)
        embeddings = embed_corpus(corpus, EmbeddingSettings(projection_dim=None), seed=0)
        model = kmeans_fit(embeddings, 2, seed=0)
        pairs = Counter((truth.topics[doc_id], cluster) for doc_id, cluster in model.assignment.items())
        agree = max(pairs[(0, 0)] + pairs[(1, 1)], pairs[(0, 1)] + pairs[(1, 0)])
        self.assertGreaterEqual(agree / len(corpus), 0.99)

    def test_same_seed_same_bytes(self):
        with tempfile.TemporaryDirectory() as tmp:
            write_synthetic(tiny_spec(seed=5), Path(tmp) / "a")
            write_synthetic(tiny_spec(seed=5), Path(tmp) / "b")
            write_synthetic(tiny_spec(seed=6), Path(tmp) / "c")
            first = (Path(tmp) / "a" / "corpus.jsonl").read_bytes()
            self.assertEqual(first, (Path(tmp) / "b" / "corpus.jsonl").read_bytes())
            self.assertNotEqual(first, (Path(tmp) / "c" / "corpus.jsonl").read_bytes())

            truth = json.loads((Path(tmp) / "a" / "truth.json").read_text())
            self.assertEqual(len(truth), 50)
            self.assertEqual(set(next(iter(truth.values()))), {"topic", "labels"})
