import logging

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import CountVectorizer
from sklearn.preprocessing import normalize
from sklearn.random_projection import SparseRandomProjection

from embedding.matrix import EmbeddingMatrix

logger = logging.getLogger(__name__)

BACKEND = "tfidf"


def idf_weights(vocab):
    df = np.asarray(vocab.document_frequency, dtype=np.float64)
    return np.log(vocab.total_docs / df)


def term_counts(texts, vocab):
    vectorizer = CountVectorizer(
        vocabulary=dict(vocab.index),
        tokenizer=str.split,
        token_pattern=None,
        lowercase=False,
    )
    return vectorizer.transform(texts).astype(np.float64)


def tfidf_weights(texts, vocab):
    """Raw ``tf(t, d) * ln(N / df(t))`` as a sparse matrix, before projection."""
    counts = term_counts(texts, vocab)
    return sparse.csr_matrix(counts.multiply(idf_weights(vocab)[np.newaxis, :]))


def project_weights(weights, projection_dim, seed=0):
    """
    Seeded sparse random projection of raw TF-IDF rows to ``projection_dim``
    columns. Rows are left unnormalized; pairwise distances survive up to the
    usual Johnson-Lindenstrauss distortion.
    """
    projector = SparseRandomProjection(
        n_components=projection_dim, random_state=seed, dense_output=True
    )
    return np.asarray(projector.fit_transform(weights))


def tfidf_embed(corpus, vocab, projection_dim=None, seed=0):
    documents = [doc for doc in corpus if not doc.is_replica]
    weights = tfidf_weights([doc.clean_text for doc in documents], vocab)

    if projection_dim:
        dense = project_weights(weights, projection_dim, seed)
    else:
        dense = weights.toarray()
    dense = normalize(dense, norm="l2")

    matrix = EmbeddingMatrix(
        ids=[doc.id for doc in documents],
        vectors=dense,
        backend=BACKEND,
        normalized=True,
        params={"projection_dim": projection_dim, "seed": seed, "min_count": vocab.min_count},
    )
    empty = matrix.empty_ids
    if empty:
        logger.warning(
            "%d documents have no weighted in-vocabulary tokens and embed as zero",
            len(empty),
        )
    logger.info("TF-IDF embedded %d documents into %d dimensions", len(documents), matrix.dim)
    return matrix
