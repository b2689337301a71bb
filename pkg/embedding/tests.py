import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from scipy import stats
from scipy.spatial.distance import pdist

from core.exceptions import ConfigError, DataError
from corpus.cleaning import clean_text
from corpus.documents import Corpus, Document, LabelState
from embedding.backends import EmbeddingSettings, embed_corpus, embed_with_model
from embedding.doc2vec import (
    Doc2VecModel,
    Doc2VecParams,
    _update,
    dbow_gradients,
    dbow_loss,
    infer_vector,
    train_doc2vec,
)
from embedding.matrix import EmbeddingMatrix
from embedding.tfidf import project_weights, tfidf_embed, tfidf_weights
from embedding.vocabulary import EmptyVocabularyError, build_vocab
from synthgen.generator import SyntheticSpec, generate


def text_corpus(*texts, replicas=()):
    docs = [
        Document(id=f"d{i}", raw_text=t, clean_text=clean_text(t), labels={})
        for i, t in enumerate(texts)
    ]
    docs += [
        Document(
            id=f"{source}#r1",
            raw_text="",
            clean_text=dict((d.id, d.clean_text) for d in docs)[source],
            labels={"g": LabelState(1)},
            replica_of=source,
        )
        for source in replicas
    ]
    return Corpus(documents=docs, goals=["g"])


def topic_corpus(seed=3):
    spec = SyntheticSpec(
        docs_per_topic=(40, 40),
        private_vocab=30,
        shared_vocab=30,
        doc_length=(20, 30),
        labeled_fraction=0.2,
        separability=0.8,
        seed=seed,
    )
    return generate(spec)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def mean_similarity(matrix, truth):
    """Average cosine similarity within and across topics."""
    sims = matrix.vectors @ matrix.vectors.T
    topics = np.array([truth.topics[doc_id] for doc_id in matrix.ids])
    same = topics[:, None] == topics[None, :]
    np.fill_diagonal(same, False)
    other = topics[:, None] != topics[None, :]
    return sims[same].mean(), sims[other].mean()


class VocabularyTests(SimpleTestCase):
    def test_document_frequency(self):
        vocab = build_vocab(text_corpus("a b", "a c"), min_count=1)
        self.assertEqual(vocab.tokens, ("a", "b", "c"))
        self.assertEqual(vocab.df("a"), 2)
        self.assertEqual(vocab.df("b"), 1)
        self.assertEqual(vocab.total_docs, 2)

    def test_min_count_filters(self):
        vocab = build_vocab(text_corpus("a b", "a c"), min_count=2)
        self.assertEqual(vocab.tokens, ("a",))

    def test_counts_each_document_once(self):
        vocab = build_vocab(text_corpus("a a a b", "b"), min_count=1)
        self.assertEqual(vocab.df("a"), 1)
        self.assertEqual(vocab.df("b"), 2)

    def test_matches_counter(self):
        corpus, _ = topic_corpus()
        expected = Counter()
        for doc in corpus:
            expected.update(set(doc.clean_text.split()))
        vocab = build_vocab(corpus, min_count=3)
        self.assertEqual(
            dict(zip(vocab.tokens, vocab.document_frequency)),
            {t: c for t, c in expected.items() if c >= 3},
        )

    def test_replicas_ignored(self):
        vocab = build_vocab(text_corpus("a b", "a c", replicas=["d0"]), min_count=1)
        self.assertEqual(vocab.df("b"), 1)
        self.assertEqual(vocab.total_docs, 2)

    def test_empty_vocabulary(self):
        with self.assertRaises(EmptyVocabularyError):
            build_vocab(text_corpus("a", "b"), min_count=2)


class TfidfTests(SimpleTestCase):
    def test_weights(self):
        corpus = text_corpus("a b", "a c")
        vocab = build_vocab(corpus, min_count=1)
        weights = tfidf_weights([doc.clean_text for doc in corpus], vocab).toarray()
        self.assertAlmostEqual(weights[0, vocab.index["b"]], np.log(2), places=6)
        self.assertAlmostEqual(weights[0, vocab.index["a"]], 0.0)
        self.assertAlmostEqual(weights[0, vocab.index["c"]], 0.0)

    def test_term_frequency_scales(self):
        corpus = text_corpus("b b a", "a c")
        vocab = build_vocab(corpus, min_count=1)
        weights = tfidf_weights([doc.clean_text for doc in corpus], vocab).toarray()
        self.assertAlmostEqual(weights[0, vocab.index["b"]], 2 * np.log(2), places=6)

    def test_shared_only_document_is_zero(self):
        corpus = text_corpus("a b", "a c", "a")
        matrix = tfidf_embed(corpus, build_vocab(corpus, min_count=1))
        self.assertEqual(matrix.empty_ids, frozenset({"d2"}))
        np.testing.assert_array_equal(matrix.vector("d2"), 0.0)
        matrix.check_normalized()

    def test_rows_are_unit_or_zero(self):
        corpus, _ = topic_corpus()
        matrix = tfidf_embed(corpus, build_vocab(corpus), projection_dim=32, seed=1)
        norms = np.linalg.norm(matrix.vectors, axis=1)
        for norm in norms:
            self.assertTrue(norm == 0.0 or abs(norm - 1.0) < 1e-6)
        self.assertEqual(matrix.dim, 32)
        self.assertEqual(matrix.tag, "tfidf:32")

    def test_replicas_not_embedded(self):
        corpus = text_corpus("a b", "a c", replicas=["d0"])
        matrix = tfidf_embed(corpus, build_vocab(corpus, min_count=1))
        self.assertEqual(matrix.ids, ("d0", "d1"))

    def test_projection_keeps_topics_apart(self):
        corpus, truth = topic_corpus()
        matrix = tfidf_embed(corpus, build_vocab(corpus), projection_dim=64, seed=0)
        within, across = mean_similarity(matrix, truth)
        self.assertGreater(within, across + 0.1)

    def test_projection_deterministic(self):
        corpus, _ = topic_corpus()
        vocab = build_vocab(corpus)
        a = tfidf_embed(corpus, vocab, projection_dim=16, seed=5)
        b = tfidf_embed(corpus, vocab, projection_dim=16, seed=5)
        np.testing.assert_array_equal(a.vectors, b.vectors)

    def test_projection_preserves_pairwise_distances(self):
        spec = SyntheticSpec(docs_per_topic=(25, 25), doc_length=(5, 300), seed=11)
        corpus, _ = generate(spec)
        weights = tfidf_weights([doc.clean_text for doc in corpus], build_vocab(corpus))
        before = pdist(weights.toarray())
        for seed in range(5):
            with self.subTest(seed=seed):
                after = pdist(project_weights(weights, 128, seed))
                self.assertGreater(stats.pearsonr(before, after)[0], 0.9)

    def test_embedding_is_normalized_projection(self):
        corpus, _ = topic_corpus()
        vocab = build_vocab(corpus)
        weights = tfidf_weights([doc.clean_text for doc in corpus], vocab)
        projected = project_weights(weights, 16, seed=2)
        matrix = tfidf_embed(corpus, vocab, projection_dim=16, seed=2)
        norms = np.linalg.norm(projected, axis=1, keepdims=True)
        expected = np.divide(projected, norms, out=np.zeros_like(projected), where=norms > 0)
        np.testing.assert_allclose(matrix.vectors, expected, atol=1e-12)


class EmbeddingMatrixTests(SimpleTestCase):
    def test_rows_missing_id(self):
        matrix = EmbeddingMatrix(ids=["x"], vectors=[[1.0, 0.0]], backend="tfidf")
        with self.assertRaises(DataError):
            matrix.rows(["x", "y"])

    def test_shape_mismatch(self):
        with self.assertRaises(DataError):
            EmbeddingMatrix(ids=["x", "y"], vectors=[[1.0, 0.0]], backend="tfidf")

    def test_non_normalized_rows_rejected(self):
        matrix = EmbeddingMatrix(ids=["x"], vectors=[[2.0, 0.0]], backend="tfidf")
        with self.assertRaises(DataError):
            matrix.check_normalized()

    def test_save_and_load(self):
        matrix = EmbeddingMatrix(
            ids=["x", "y"], vectors=[[0.6, 0.8], [0.0, 0.0]], backend="tfidf"
        )
        with tempfile.TemporaryDirectory() as tmp:
            loaded = EmbeddingMatrix.load(matrix.save(Path(tmp) / "emb"))
        self.assertEqual(loaded.ids, ("x", "y"))
        self.assertEqual(loaded.empty_ids, frozenset({"y"}))
        np.testing.assert_allclose(loaded.vectors, matrix.vectors, rtol=1e-6)


class Doc2VecTests(SimpleTestCase):
    params = Doc2VecParams(
        vector_size=16, epochs=15, learning_rate=0.05, negative=5, sample=0.0, seed=2
    )

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(0)
        m, k, d = 4, 3, 6
        doc = rng.normal(size=d)
        targets = rng.normal(size=(m, d))
        negatives = rng.normal(size=(m, k, d))
        mask = (rng.random((m, k)) > 0.2).astype(np.float64)
        grad_doc, grad_targets, grad_negatives = dbow_gradients(doc, targets, negatives, mask)

        eps = 1e-6

        def numeric(array, loss):
            grad = np.zeros_like(array)
            for index in np.ndindex(array.shape):
                saved = array[index]
                array[index] = saved + eps
                upper = loss()
                array[index] = saved - eps
                lower = loss()
                array[index] = saved
                grad[index] = (upper - lower) / (2 * eps)
            return grad

        loss = lambda: dbow_loss(doc, targets, negatives, mask)  # noqa: E731
        for analytic, array in (
            (grad_doc, doc),
            (grad_targets, targets),
            (grad_negatives, negatives),
        ):
            expected = numeric(array, loss)
            error = np.linalg.norm(analytic - expected) / max(np.linalg.norm(expected), 1e-12)
            self.assertLess(error, 1e-5)

    def test_each_token_occurrence_is_one_step(self):
        rng = np.random.default_rng(1)
        doc = rng.normal(size=4)
        output = rng.normal(size=(6, 4))
        token_ids = np.array([1, 3, 1])
        noise_ids = np.array([[2, 4], [0, 1], [5, 5]])
        rate = 0.1

        expected_doc, expected_output = doc.copy(), output.copy()
        expected_loss = 0.0
        for target, noise in zip(token_ids, noise_ids):
            targets = expected_output[[target]]
            negatives = expected_output[noise][np.newaxis]
            mask = (noise != target).astype(np.float64)[np.newaxis]
            expected_loss += dbow_loss(expected_doc, targets, negatives, mask)
            grad_doc, grad_targets, grad_negatives = dbow_gradients(
                expected_doc, targets, negatives, mask
            )
            expected_output[target] -= rate * grad_targets[0]
            np.add.at(expected_output, noise, -rate * grad_negatives[0])
            expected_doc -= rate * grad_doc

        batched_doc = doc - rate * dbow_gradients(
            doc, output[token_ids], output[noise_ids], (noise_ids != token_ids[:, None]) * 1.0
        )[0]
        loss = _update(doc, output, token_ids, noise_ids, rate, True)
        self.assertAlmostEqual(loss, expected_loss, places=10)
        np.testing.assert_allclose(doc, expected_doc, rtol=1e-12)
        np.testing.assert_allclose(output, expected_output, rtol=1e-12)
        self.assertFalse(np.allclose(doc, batched_doc))

    def test_loss_decreases(self):
        corpus, _ = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        self.assertEqual(len(model.loss_curve), self.params.epochs)
        self.assertLess(model.loss_curve[-1], model.loss_curve[0])

    def test_deterministic(self):
        corpus, _ = topic_corpus()
        a = train_doc2vec(corpus, self.params)
        b = train_doc2vec(corpus, self.params)
        np.testing.assert_array_equal(a.doc_vectors, b.doc_vectors)

    def test_topics_separate(self):
        corpus, truth = topic_corpus()
        matrix = train_doc2vec(corpus, self.params).embedding_matrix()
        matrix.check_normalized()
        within, across = mean_similarity(matrix, truth)
        self.assertGreater(within, across)

    def test_invalid_params(self):
        with self.assertRaises(ConfigError):
            Doc2VecParams(epochs=0)
        with self.assertRaises(ConfigError):
            Doc2VecParams(negative=0)

    def test_learning_rate_decays_linearly(self):
        params = Doc2VecParams(learning_rate=1.0, epochs=3)
        self.assertEqual(params.learning_rate_at(0), 1.0)
        self.assertAlmostEqual(params.learning_rate_at(2), 0.01)
        self.assertAlmostEqual(params.learning_rate_at(1), 0.505)

    def test_identical_documents_get_matching_vectors(self):
        corpus, _ = topic_corpus()
        first = next(iter(corpus))
        twin = Document(id="twin", raw_text=first.raw_text, clean_text=first.clean_text)
        corpus = corpus.with_documents(list(corpus) + [twin])
        params = Doc2VecParams(vector_size=8, epochs=20, sample=0.0, seed=2)
        model = train_doc2vec(corpus, params)
        rows = {doc_id: index for index, doc_id in enumerate(model.doc_ids)}
        self.assertGreater(
            cosine(model.doc_vectors[rows[first.id]], model.doc_vectors[rows["twin"]]), 0.99
        )

    def test_reinferred_training_document_matches_stored_vector(self):
        corpus, _ = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        for index in (0, 10, 40):
            doc = corpus.get(model.doc_ids[index])
            with self.subTest(doc=doc.id):
                vector = infer_vector(model, doc.clean_text, seed=self.params.seed)
                self.assertGreater(cosine(vector, model.doc_vectors[index]), 0.8)

    def test_inference_stable_across_seeds(self):
        corpus, _ = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        doc = corpus.get(model.doc_ids[5])
        a = infer_vector(model, doc.clean_text, seed=1)
        b = infer_vector(model, doc.clean_text, seed=2)
        self.assertFalse(np.array_equal(a, b))
        self.assertGreater(cosine(a, b), 0.7)

    def test_infer_unknown_tokens_is_zero(self):
        corpus, _ = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        np.testing.assert_array_equal(infer_vector(model, "qqqq zzzz"), 0.0)

    def test_inferred_vector_closer_to_own_topic(self):
        corpus, truth = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        matrix = model.embedding_matrix()
        topics = np.array([truth.topics[doc_id] for doc_id in matrix.ids])
        doc = corpus.get(matrix.ids[0])
        vector = infer_vector(model, doc.clean_text, infer_epochs=50, seed=1)
        sims = matrix.vectors @ (vector / np.linalg.norm(vector))
        own = topics == truth.topics[doc.id]
        self.assertGreater(sims[own].mean(), sims[~own].mean())

    def test_save_and_load(self):
        corpus, _ = topic_corpus()
        model = train_doc2vec(corpus, self.params)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = Doc2VecModel.load(model.save(Path(tmp) / "d2v"))
        self.assertEqual(loaded.params, model.params)
        self.assertEqual(loaded.vocab.tokens, model.vocab.tokens)
        np.testing.assert_allclose(
            loaded.word_vectors, model.word_vectors.astype(np.float32), rtol=1e-6
        )


class BackendTests(SimpleTestCase):
    def test_unknown_backend(self):
        with self.assertRaises(ConfigError):
            EmbeddingSettings(backend="bert")

    def test_tfidf_backend(self):
        corpus, _ = topic_corpus()
        matrix = embed_corpus(corpus, EmbeddingSettings(projection_dim=8), seed=0)
        self.assertEqual(matrix.backend, "tfidf")
        self.assertEqual(len(matrix.ids), len(corpus))

    def test_doc2vec_model_reused_by_inference(self):
        corpus, _ = topic_corpus()
        settings = EmbeddingSettings(
            backend="doc2vec",
            doc2vec=Doc2VecParams(vector_size=8, epochs=3, infer_epochs=3, sample=0.0),
        )
        with tempfile.TemporaryDirectory() as tmp:
            trained = embed_corpus(corpus, settings, seed=4, model_dir=Path(tmp) / "model")
            inferred = embed_with_model(corpus, Path(tmp) / "model", seed=4)
        self.assertEqual(trained.ids, inferred.ids)
        self.assertEqual(inferred.dim, 8)
        self.assertEqual(inferred.params["seed"], 4)
