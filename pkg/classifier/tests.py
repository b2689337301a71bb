import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch
from django.test import SimpleTestCase, tag
from joblib import Parallel, delayed
from scipy import stats
from scipy.special import logit

from classifier.bootstrap import (
    BootstrapReport,
    DegenerateSamplesError,
    RedrawExhaustedError,
    bootstrap_eval,
    welch_t_test,
)
from classifier.network import (
    ClassifierConfig,
    SingleClassError,
    TrainedClassifier,
    build_network,
    fit,
    metrics,
    predict,
    train,
)
from core.exceptions import ConfigError, DataError
from corpus.documents import Corpus, Document, LabelState
from embedding.backends import EmbeddingSettings, embed_corpus
from embedding.matrix import EmbeddingMatrix
from propagation.augmentation import augment
from propagation.rules import PropagationParams
from synthgen.generator import SyntheticSpec, generate
from synthgen.presets import get_preset

FAST = ClassifierConfig(hidden_sizes=(8,), dropout=(0.2,), epochs=5, batch_size=16)


def blobs(n=200, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(scale=0.5, size=(n, 2)) + np.where(y[:, None] == 1, 2.0, -2.0)
    return X, y


def small_corpus(seed=0):
    spec = SyntheticSpec(
        docs_per_topic=(60, 60),
        private_vocab=40,
        shared_vocab=40,
        doc_length=(20, 30),
        labeled_fraction=0.5,
        separability=0.9,
        seed=seed,
    )
    corpus, _ = generate(spec)
    return corpus, embed_corpus(corpus, EmbeddingSettings(projection_dim=16), seed=seed)


class ConfigTests(SimpleTestCase):
    def test_defaults(self):
        config = ClassifierConfig()
        self.assertEqual(config.hidden_sizes, (64, 16))
        self.assertEqual(config.dropout, (0.8, 0.6))
        self.assertEqual((config.learning_rate, config.threshold), (1e-3, 0.5))

    def test_invalid(self):
        for kwargs in (
            {"dropout": (1.0, 0.5)},
            {"dropout": (0.5,)},
            {"learning_rate": 0},
            {"epochs": 0},
        ):
            with self.subTest(kwargs=kwargs), self.assertRaises(ConfigError):
                ClassifierConfig(**kwargs)


class TrainTests(SimpleTestCase):
    def test_separable_blobs(self):
        X, y = blobs()
        model = fit(X, y, ClassifierConfig())
        accuracy, sensitivity = metrics(model, X, y)
        self.assertGreaterEqual(accuracy, 0.95)
        self.assertEqual(len(model.loss_curve), 100)

    def test_single_class(self):
        X, _ = blobs(20)
        with self.assertRaises(SingleClassError):
            fit(X, np.ones(20, dtype=np.int64), FAST)

    def test_deterministic_and_isolated(self):
        X, y = blobs(60)
        torch.manual_seed(5)
        expected = torch.rand(1)
        torch.manual_seed(5)
        a = fit(X, y, FAST)
        self.assertTrue(torch.equal(torch.rand(1), expected))
        b = fit(X, y, FAST)
        for pa, pb in zip(a.module.parameters(), b.module.parameters()):
            self.assertTrue(torch.equal(pa, pb))
        self.assertEqual(a.loss_curve, b.loss_curve)

    def test_threaded_fits_match_sequential(self):
        X, y = blobs(120)
        configs = [replace(FAST, epochs=20, seed=seed) for seed in (11, 22, 33, 44)]
        sequential = [fit(X, y, config) for config in configs]
        threaded = Parallel(n_jobs=4, backend="threading")(
            delayed(fit)(X, y, config) for config in configs
        )
        for a, b in zip(sequential, threaded):
            self.assertEqual(a.loss_curve, b.loss_curve)
            for pa, pb in zip(a.module.parameters(), b.module.parameters()):
                self.assertTrue(torch.equal(pa, pb))

    def test_loss_decreases_on_topic_corpus(self):
        corpus, _ = generate(get_preset("sep2"))
        embeddings = embed_corpus(corpus, EmbeddingSettings(), seed=0)
        labels = {doc.id: doc.original_value("g1") for doc in corpus.labeled("g1")}
        model = train(embeddings, labels, ClassifierConfig(epochs=50))
        self.assertLess(model.loss_curve[49], model.loss_curve[0])
        self.assertEqual(model.feature_tag, "tfidf:128")

    def test_unlabeled_document_rejected(self):
        corpus, embeddings = small_corpus()
        labels = {doc_id: 1 for doc_id in embeddings.ids[:4]}
        labels[embeddings.ids[5]] = None
        with self.assertRaises(DataError):
            train(embeddings, labels, FAST)

    def test_bce_gradients_match_finite_differences(self):
        config = ClassifierConfig(hidden_sizes=(4, 3), dropout=(0.0, 0.0))
        torch.manual_seed(0)
        module = build_network(5, config).double()
        X = torch.randn(12, 5, dtype=torch.float64)
        y = torch.tensor([0.0, 1.0] * 6, dtype=torch.float64)
        criterion = torch.nn.BCELoss()

        def loss():
            return criterion(module(X).squeeze(1), y)

        module.zero_grad()
        loss().backward()
        eps = 1e-6
        with torch.no_grad():
            for parameter in module.parameters():
                numeric = torch.zeros_like(parameter)
                flat, grad = parameter.view(-1), numeric.view(-1)
                for i in range(flat.numel()):
                    saved = flat[i].item()
                    flat[i] = saved + eps
                    upper = loss().item()
                    flat[i] = saved - eps
                    lower = loss().item()
                    flat[i] = saved
                    grad[i] = (upper - lower) / (2 * eps)
                error = torch.norm(parameter.grad - numeric) / max(torch.norm(numeric).item(), 1e-12)
                self.assertLess(error.item(), 1e-4)


class PredictTests(SimpleTestCase):
    def constant(self, probability=None):
        module = build_network(3, ClassifierConfig())
        with torch.no_grad():
            for parameter in module.parameters():
                parameter.zero_()
            if probability is not None:
                module[-2].bias.fill_(float(logit(probability)))
        return TrainedClassifier(
            module=module, config=ClassifierConfig(), loss_curve=(), feature_tag="tfidf:3"
        )

    def test_zero_network(self):
        probability, label = predict(self.constant(), np.array([1.0, -2.0, 3.0]))
        self.assertEqual(probability, 0.5)
        self.assertEqual(label, 0)

    def test_strictly_above_threshold(self):
        probability, label = predict(self.constant(0.51), np.zeros(3))
        self.assertAlmostEqual(probability, 0.51, places=5)
        self.assertEqual(label, 1)

    def test_dimension_mismatch(self):
        with self.assertRaises(DataError):
            predict(self.constant(), np.zeros(4))

    def test_feature_tag_checked(self):
        matrix = EmbeddingMatrix(ids=["a"], vectors=[[1.0, 0.0]], backend="tfidf")
        with self.assertRaises(DataError):
            self.constant().check_features(matrix)

    def test_save_and_load(self):
        X, y = blobs(40)
        model = fit(X, y, FAST)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = TrainedClassifier.load(model.save(Path(tmp) / "clf"))
        np.testing.assert_array_equal(loaded.probabilities(X), model.probabilities(X))
        self.assertEqual(loaded.loss_curve, model.loss_curve)


class WelchTests(SimpleTestCase):
    def test_hand_case(self):
        result = welch_t_test([1, 2, 3], [2, 3, 4])
        self.assertAlmostEqual(result.t, -1.2247, places=4)
        self.assertAlmostEqual(result.df, 4.0)
        self.assertAlmostEqual(result.p, 0.288, places=3)

    def test_identical_samples(self):
        result = welch_t_test([0.5, 0.7, 0.9], [0.5, 0.7, 0.9])
        self.assertEqual(result.t, 0.0)
        self.assertAlmostEqual(result.p, 1.0)

    def test_matches_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.normal(size=int(rng.integers(2, 40)))
            b = rng.normal(loc=0.3, scale=2.0, size=int(rng.integers(2, 40)))
            expected = stats.ttest_ind(a, b, equal_var=False)
            result = welch_t_test(a, b)
            self.assertAlmostEqual(result.t, expected.statistic, delta=1e-6)
            self.assertAlmostEqual(result.p, expected.pvalue, delta=1e-6)

    def test_zero_variance(self):
        with self.assertRaises(DegenerateSamplesError):
            welch_t_test([1, 1, 1], [2, 2])


class BootstrapTests(SimpleTestCase):
    def test_identical_arms(self):
        corpus, embeddings = small_corpus()
        report = bootstrap_eval(corpus, corpus, embeddings, "g1", FAST, iterations=12, seed=4)
        self.assertEqual(report.arms["original"], report.arms["augmented"])
        for result in report.tests.values():
            self.assertTrue(result is None or result.p > 0.05)
        self.assertEqual(len(report.arms["original"]["accuracy"]), 12)

    def test_deterministic(self):
        corpus, embeddings = small_corpus()
        augmented = augment(corpus, embeddings, PropagationParams(2, 100, 50), "g1", 0).corpus
        a = bootstrap_eval(corpus, augmented, embeddings, "g1", FAST, iterations=4, seed=2)
        b = bootstrap_eval(corpus, augmented, embeddings, "g1", FAST, iterations=4, seed=2)
        self.assertEqual(a.to_dict(), b.to_dict())
        self.assertEqual(BootstrapReport.from_dict(a.to_dict()).to_dict(), a.to_dict())

    def test_workers_do_not_change_results(self):
        corpus, embeddings = small_corpus()
        augmented = augment(corpus, embeddings, PropagationParams(2, 100, 50), "g1", 0).corpus
        a = bootstrap_eval(corpus, augmented, embeddings, "g1", FAST, iterations=4, seed=2)
        b = bootstrap_eval(
            corpus, augmented, embeddings, "g1", FAST, iterations=4, seed=2, workers=2
        )
        self.assertEqual(a.arms, b.arms)

    def test_summary_and_boxplots(self):
        corpus, embeddings = small_corpus()
        report = bootstrap_eval(corpus, corpus, embeddings, "g1", FAST, iterations=3, seed=0)
        self.assertEqual(
            set(report.summary_row()),
            {"goal", "orig_acc", "orig_sens", "aug_acc", "aug_sens", "p_acc", "p_sens"},
        )
        rows = report.boxplot_rows()
        self.assertEqual(len(rows), 4)
        for row in rows:
            self.assertTrue(row["min"] <= row["q1"] <= row["median"] <= row["q3"] <= row["max"])

    def test_redraws_exhausted(self):
        docs = [
            Document(id=f"d{i}", raw_text="", clean_text="", labels={"g": LabelState(int(i == 0))})
            for i in range(10)
        ]
        corpus = Corpus(documents=docs, goals=["g"])
        vectors = np.random.default_rng(0).normal(size=(10, 3))
        embeddings = EmbeddingMatrix(ids=corpus.ids, vectors=vectors, backend="tfidf")
        with self.assertRaises(RedrawExhaustedError):
            bootstrap_eval(corpus, corpus, embeddings, "g", FAST, iterations=2)

    def test_too_few_iterations(self):
        corpus, embeddings = small_corpus()
        with self.assertRaises(ConfigError):
            bootstrap_eval(corpus, corpus, embeddings, "g1", FAST, iterations=1)


@tag("slow")
class DirectionalTests(SimpleTestCase):
    def test_augmentation_raises_sensitivity_on_imbalanced_corpus(self):
        corpus, _ = generate(get_preset("sep2-imbalanced"))
        embeddings = embed_corpus(corpus, EmbeddingSettings(), seed=0)
        augmented = augment(corpus, embeddings, PropagationParams(10, 100, 50), "g1", 0).corpus
        report = bootstrap_eval(
            corpus, augmented, embeddings, "g1", ClassifierConfig(), iterations=100, seed=0
        )
        row = report.summary_row()
        self.assertGreaterEqual(row["aug_sens"] - row["orig_sens"], 0.10)
        self.assertLess(row["p_sens"], 0.05)
