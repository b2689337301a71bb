"""Backend selection; the only place that knows which backend produced a matrix."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from core.exceptions import ConfigError
from embedding import doc2vec, tfidf
from embedding.vocabulary import build_vocab

logger = logging.getLogger(__name__)

BACKENDS = (tfidf.BACKEND, doc2vec.BACKEND)


@dataclass(frozen=True)
class EmbeddingSettings:
    backend: str = tfidf.BACKEND
    min_count: int = 2
    projection_dim: int | None = 128
    doc2vec: doc2vec.Doc2VecParams = field(default_factory=doc2vec.Doc2VecParams)

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ConfigError(f"Unknown embedding backend {self.backend!r}; use one of {BACKENDS}.")
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}.")


def embed_corpus(corpus, settings: EmbeddingSettings, seed, model_dir=None):
    """
    Embed every non-replica document of ``corpus``.

    With the doc2vec backend the trained model is saved to ``model_dir`` when
    given, so later corpora can be embedded by inference.
    """
    if settings.backend == tfidf.BACKEND:
        vocab = build_vocab(corpus, settings.min_count)
        return tfidf.tfidf_embed(corpus, vocab, settings.projection_dim, seed)

    params = replace(settings.doc2vec, min_count=settings.min_count, seed=seed)
    model = doc2vec.train_doc2vec(corpus, params)
    if model_dir is not None:
        model.save(Path(model_dir))
    return model.embedding_matrix()


def embed_with_model(corpus, model_dir, seed):
    model = doc2vec.Doc2VecModel.load(model_dir)
    logger.info("Inferring %d documents with doc2vec model %s", len(corpus), model_dir)
    return doc2vec.infer_matrix(model, corpus, seed)
