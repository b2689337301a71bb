"""
Paragraph vectors, distributed bag-of-words variant (PV-DBOW).

Each document vector is trained to predict the words of its document against
``negative`` noise words drawn from the unigram distribution raised to 0.75.
Word (output) vectors start at zero, document vectors uniformly in
``[-0.5/D, 0.5/D)``. Every retained token occurrence is one SGD step on the
document vector and its sampled word vectors. Documents are visited in a
fresh seeded order every epoch and the learning rate decays linearly from
``learning_rate`` to ``learning_rate / 100``. One writer, one random stream:
the result is a pure function of the corpus and the seed.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit
from sklearn.preprocessing import normalize

from core.artifacts import (
    FORMAT_VERSION,
    check_format,
    read_json,
    read_matrix,
    write_json,
    write_matrix,
)
from core.exceptions import ConfigError, TrainingDivergedError
from corpus.cleaning import tokenize
from embedding.matrix import EmbeddingMatrix
from embedding.vocabulary import Vocabulary, build_vocab

logger = logging.getLogger(__name__)

BACKEND = "doc2vec"


@dataclass(frozen=True)
class Doc2VecParams:
    vector_size: int = 128
    epochs: int = 40
    learning_rate: float = 0.025
    negative: int = 5
    sample: float = 1e-4
    min_count: int = 2
    infer_epochs: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.vector_size < 2:
            raise ConfigError(f"vector_size must be >= 2, got {self.vector_size}.")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}.")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}.")
        if self.negative < 1:
            raise ConfigError(f"negative must be >= 1, got {self.negative}.")
        if self.sample < 0:
            raise ConfigError(f"sample must be >= 0, got {self.sample}.")

    def learning_rate_at(self, epoch, epochs=None):
        epochs = epochs or self.epochs
        if epochs == 1:
            return self.learning_rate
        final = self.learning_rate / 100
        return self.learning_rate - (self.learning_rate - final) * epoch / (epochs - 1)


def dbow_loss(doc_vector, targets, negatives, mask=None):
    """
    Negative-sampling loss of one document vector against ``m`` target word
    vectors (m x D) and their noise words (m x k x D).
    """
    positive = targets @ doc_vector
    noise = np.logaddexp(0.0, negatives @ doc_vector)
    if mask is not None:
        noise = noise * mask
    return float(np.logaddexp(0.0, -positive).sum() + noise.sum())


def dbow_gradients(doc_vector, targets, negatives, mask=None):
    """Analytic gradients of :func:`dbow_loss` w.r.t. all three arguments."""
    positive = expit(targets @ doc_vector) - 1.0
    noise = expit(negatives @ doc_vector)
    if mask is not None:
        noise = noise * mask
    grad_doc = positive @ targets + np.einsum("mk,mkd->d", noise, negatives)
    grad_targets = positive[:, np.newaxis] * doc_vector
    grad_negatives = noise[..., np.newaxis] * doc_vector
    return grad_doc, grad_targets, grad_negatives


class NoiseSampler:
    def __init__(self, counts, sample):
        counts = np.asarray(counts, dtype=np.float64)
        weights = counts**0.75
        self.cumulative = np.cumsum(weights / weights.sum())
        self.cumulative[-1] = 1.0
        if sample > 0:
            frequency = counts / counts.sum()
            self.keep = np.minimum(1.0, np.sqrt(sample / frequency))
        else:
            self.keep = np.ones_like(counts)

    def subsample(self, rng, token_ids):
        if token_ids.size == 0:
            return token_ids
        return token_ids[rng.random(token_ids.size) < self.keep[token_ids]]

    def draw(self, rng, shape):
        return np.searchsorted(self.cumulative, rng.random(shape), side="right").clip(
            max=self.cumulative.size - 1
        )


def _update(doc_vector, output, token_ids, noise_ids, learning_rate, train_words):
    """
    One SGD step per token occurrence, in stream order; ``doc_vector`` and
    (with ``train_words``) ``output`` change in place. Returns the summed loss.
    """
    total = 0.0
    for target, noise in zip(token_ids, noise_ids):
        targets = output[[target]]
        negatives = output[noise][np.newaxis]
        # a noise draw equal to its target word carries no signal
        mask = (noise != target).astype(np.float64)[np.newaxis]

        total += dbow_loss(doc_vector, targets, negatives, mask)
        grad_doc, grad_targets, grad_negatives = dbow_gradients(
            doc_vector, targets, negatives, mask
        )
        if train_words:
            output[target] -= learning_rate * grad_targets[0]
            np.add.at(output, noise, -learning_rate * grad_negatives[0])
        doc_vector -= learning_rate * grad_doc
    return total


@dataclass(frozen=True, eq=False)
class Doc2VecModel:
    vocab: Vocabulary
    params: Doc2VecParams
    doc_ids: tuple
    doc_vectors: np.ndarray
    word_vectors: np.ndarray
    token_counts: tuple
    loss_curve: tuple = ()
    empty_ids: frozenset = field(default_factory=frozenset)

    @property
    def dim(self):
        return self.params.vector_size

    def token_ids(self, clean):
        index = self.vocab.index
        return np.array([index[t] for t in tokenize(clean) if t in index], dtype=np.int64)

    def embedding_matrix(self) -> EmbeddingMatrix:
        vectors = self.doc_vectors.copy()
        for i, doc_id in enumerate(self.doc_ids):
            if doc_id in self.empty_ids:
                vectors[i] = 0.0
        return EmbeddingMatrix(
            ids=self.doc_ids,
            vectors=normalize(vectors, norm="l2"),
            backend=BACKEND,
            normalized=True,
            params=asdict(self.params),
        )

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix(directory / "doc_vectors.f32", self.doc_vectors)
        write_matrix(directory / "word_vectors.f32", self.word_vectors)
        write_json(directory / "vocab.json", self.vocab.to_dict())
        write_json(directory / "doc_ids.json", list(self.doc_ids))
        write_json(
            directory / "meta.json",
            {
                "format_version": FORMAT_VERSION,
                "kind": "doc2vec",
                "backend": BACKEND,
                "hyperparams": asdict(self.params),
                "seed": self.params.seed,
                "doc_rows": len(self.doc_ids),
                "word_rows": len(self.vocab),
                "dim": self.dim,
                "token_counts": list(self.token_counts),
                "loss_curve": list(self.loss_curve),
                "empty": sorted(self.empty_ids),
            },
        )
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "meta.json", "embed")
        check_format(meta, directory)
        dim = meta["dim"]
        return cls(
            vocab=Vocabulary.from_dict(read_json(directory / "vocab.json", "embed")),
            params=Doc2VecParams(**meta["hyperparams"]),
            doc_ids=tuple(read_json(directory / "doc_ids.json", "embed")),
            doc_vectors=read_matrix(
                directory / "doc_vectors.f32", meta["doc_rows"], dim, "embed"
            ),
            word_vectors=read_matrix(
                directory / "word_vectors.f32", meta["word_rows"], dim, "embed"
            ),
            token_counts=tuple(meta["token_counts"]),
            loss_curve=tuple(meta["loss_curve"]),
            empty_ids=frozenset(meta["empty"]),
        )


def train_doc2vec(corpus, params: Doc2VecParams, vocab=None) -> Doc2VecModel:
    documents = [doc for doc in corpus if not doc.is_replica]
    vocab = vocab or build_vocab(corpus, params.min_count)
    index = vocab.index
    streams = [
        np.array([index[t] for t in tokenize(doc.clean_text) if t in index], dtype=np.int64)
        for doc in documents
    ]
    counts = np.bincount(
        np.concatenate(streams) if streams else np.empty(0, dtype=np.int64),
        minlength=len(vocab),
    )
    sampler = NoiseSampler(np.maximum(counts, 1), params.sample)

    rng = np.random.default_rng(params.seed)
    dim = params.vector_size
    doc_vectors = (rng.random((len(documents), dim)) - 0.5) / dim
    word_vectors = np.zeros((len(vocab), dim))

    loss_curve = []
    for epoch in range(params.epochs):
        learning_rate = params.learning_rate_at(epoch)
        epoch_loss = 0.0
        epoch_tokens = 0
        for step, d in enumerate(rng.permutation(len(documents))):
            token_ids = sampler.subsample(rng, streams[d])
            if token_ids.size == 0:
                continue
            noise_ids = sampler.draw(rng, (token_ids.size, params.negative))
            loss = _update(
                doc_vectors[d], word_vectors, token_ids, noise_ids, learning_rate, True
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError("doc2vec", epoch + 1, step, loss)
            epoch_loss += loss
            epoch_tokens += token_ids.size
        average = epoch_loss / max(epoch_tokens, 1)
        loss_curve.append(average)
        logger.debug("doc2vec epoch %d lr %.5f loss %.5f", epoch + 1, learning_rate, average)

    if not (np.all(np.isfinite(doc_vectors)) and np.all(np.isfinite(word_vectors))):
        raise TrainingDivergedError("doc2vec", params.epochs, -1, float("nan"))

    empty = frozenset(doc.id for doc, stream in zip(documents, streams) if stream.size == 0)
    if empty:
        logger.warning("%d documents have no in-vocabulary tokens and embed as zero", len(empty))
    logger.info(
        "doc2vec trained on %d documents, %d words, final loss %.4f",
        len(documents),
        len(vocab),
        loss_curve[-1],
    )
    return Doc2VecModel(
        vocab=vocab,
        params=params,
        doc_ids=tuple(doc.id for doc in documents),
        doc_vectors=doc_vectors,
        word_vectors=word_vectors,
        token_counts=tuple(int(c) for c in counts),
        loss_curve=tuple(loss_curve),
        empty_ids=empty,
    )


def infer_vector(model: Doc2VecModel, clean, infer_epochs=None, seed=0):
    """
    Train a fresh document vector against frozen word vectors.

    Returns the zero vector when ``clean`` has no in-vocabulary token.
    """
    epochs = infer_epochs or model.params.infer_epochs
    token_ids = model.token_ids(clean)
    if token_ids.size == 0:
        return np.zeros(model.dim)

    sampler = NoiseSampler(np.maximum(model.token_counts, 1), model.params.sample)
    rng = np.random.default_rng(seed)
    doc_vector = (rng.random(model.dim) - 0.5) / model.dim
    output = model.word_vectors
    for epoch in range(epochs):
        learning_rate = model.params.learning_rate_at(epoch, epochs)
        kept = sampler.subsample(rng, token_ids)
        if kept.size == 0:
            continue
        noise_ids = sampler.draw(rng, (kept.size, model.params.negative))
        loss = _update(doc_vector, output, kept, noise_ids, learning_rate, False)
        if not np.isfinite(loss):
            raise TrainingDivergedError("doc2vec inference", epoch + 1, 0, loss)
    return doc_vector


def infer_matrix(model: Doc2VecModel, corpus, seed=0) -> EmbeddingMatrix:
    documents = [doc for doc in corpus if not doc.is_replica]
    vectors = np.vstack(
        [infer_vector(model, doc.clean_text, seed=seed) for doc in documents]
    ) if documents else np.empty((0, model.dim))
    return EmbeddingMatrix(
        ids=[doc.id for doc in documents],
        vectors=normalize(vectors, norm="l2"),
        backend=BACKEND,
        normalized=True,
        params=asdict(model.params),
    )
