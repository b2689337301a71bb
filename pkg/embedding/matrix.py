from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.artifacts import (
    FORMAT_VERSION,
    check_format,
    read_json,
    read_matrix,
    write_json,
    write_matrix,
)
from core.exceptions import DataError

logger = logging.getLogger(__name__)

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    ids: tuple
    vectors: np.ndarray
    backend: str
    normalized: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.ids):
            raise DataError(
                f"Embedding has {len(self.ids)} ids but vectors of shape {vectors.shape}."
            )
        if not np.all(np.isfinite(vectors)):
            raise DataError("Embedding vectors contain non-finite entries.")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "_index", {doc_id: i for i, doc_id in enumerate(self.ids)})
        if len(self._index) != len(self.ids):
            raise DataError("Embedding ids are not unique.")

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def tag(self):
        return f"{self.backend}:{self.dim}"

    def __contains__(self, doc_id):
        return doc_id in self._index

    def vector(self, doc_id):
        return self.vectors[self._index[doc_id]]

    def rows(self, doc_ids):
        missing = [doc_id for doc_id in doc_ids if doc_id not in self._index]
        if missing:
            raise DataError(f"No embedding for documents {missing[:5]}.")
        return self.vectors[[self._index[doc_id] for doc_id in doc_ids]]

    @property
    def empty_ids(self):
        """Documents embedded as the zero vector; they are kept out of clustering."""
        norms = np.linalg.norm(self.vectors, axis=1)
        return frozenset(doc_id for doc_id, norm in zip(self.ids, norms) if norm == 0.0)

    def check_normalized(self):
        if not self.normalized:
            return
        norms = np.linalg.norm(self.vectors, axis=1)
        nonzero = norms > 0
        worst = np.max(np.abs(norms[nonzero] - 1.0), initial=0.0)
        if worst > NORM_TOLERANCE:
            raise DataError(f"Normalized embedding has a row norm off by {worst:.2e}.")

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix(directory / "vectors.f32", self.vectors)
        write_json(directory / "ids.json", list(self.ids))
        write_json(
            directory / "meta.json",
            {
                "format_version": FORMAT_VERSION,
                "kind": "embedding",
                "backend": self.backend,
                "normalized": self.normalized,
                "rows": len(self.ids),
                "dim": self.dim,
                "params": self.params,
                "empty": sorted(self.empty_ids),
            },
        )
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "meta.json", "embed")
        check_format(meta, directory)
        ids = read_json(directory / "ids.json", "embed")
        vectors = read_matrix(directory / "vectors.f32", meta["rows"], meta["dim"], "embed")
        return cls(
            ids=ids,
            vectors=vectors,
            backend=meta["backend"],
            normalized=meta["normalized"],
            params=meta.get("params", {}),
        )
