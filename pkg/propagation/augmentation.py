from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from clustering.kmeans import ClusterModel, kmeans_fit
from core.artifacts import write_json
from core.exceptions import DataError, StageError
from corpus.documents import Corpus
from embedding.matrix import EmbeddingMatrix
from propagation.rules import (
    Decision,
    PropagationParams,
    propagate,
    select_neighborhood,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusteringInput:
    """
    Rows that enter k-means for one goal.

    ``labels`` holds the label each row shows to the propagation rule:
    original values, 1 for upsampled replicas and None for unlabeled or
    masked documents. Only ``eligible`` documents may receive a synthetic
    label.
    """

    matrix: EmbeddingMatrix
    labels: Mapping[str, Optional[int]]
    eligible: frozenset
    masked: frozenset = frozenset()
    dropped: tuple = ()


def clustering_input(corpus: Corpus, embeddings: EmbeddingMatrix, goal, masked=(), excluded=()):
    corpus.check_goal(goal)
    masked, excluded = frozenset(masked), frozenset(excluded)
    empty = embeddings.empty_ids

    ids, rows, labels, eligible, dropped = [], [], {}, set(), []
    for doc in corpus:
        if doc.id in excluded:
            continue
        if doc.source_id not in embeddings:
            raise DataError(
                f"Document {doc.id!r} has no embedding; re-run `manage.py embed` for this corpus."
            )
        if doc.source_id in empty:
            dropped.append(doc.id)
            continue
        ids.append(doc.id)
        rows.append(embeddings.vector(doc.source_id))
        if doc.id in masked:
            labels[doc.id] = None
            eligible.add(doc.id)
        else:
            labels[doc.id] = doc.original_value(goal)
            if not doc.label(goal).is_labeled:
                eligible.add(doc.id)

    if dropped:
        logger.warning("%d zero-vector documents left out of clustering for %s", len(dropped), goal)
    matrix = EmbeddingMatrix(
        ids=ids,
        vectors=np.vstack(rows) if rows else np.empty((0, embeddings.dim)),
        backend=embeddings.backend,
        normalized=embeddings.normalized,
        params=embeddings.params,
    )
    return ClusteringInput(
        matrix=matrix,
        labels=labels,
        eligible=frozenset(eligible),
        masked=masked & set(ids),
        dropped=tuple(dropped),
    )


@dataclass(frozen=True)
class ClusterSummary:
    id: int
    size: int
    retained: int
    p: Optional[float]
    decision: Decision
    assigned: int

    def to_dict(self):
        return {
            "id": self.id,
            "size": self.size,
            "retained": self.retained,
            "p": self.p,
            "decision": self.decision.value,
            "assigned": self.assigned,
        }


def propagate_clusters(model: ClusterModel, inputs: ClusteringInput, params: PropagationParams):
    """Synthetic assignments of every neighborhood of an already fitted model."""
    assignments, summaries = {}, []
    for cluster in range(model.k):
        nbhd = select_neighborhood(model, cluster, params.radius_pct, inputs.labels)
        outcome = propagate(nbhd, inputs.labels, params.threshold_pct)
        given = {
            doc_id: value
            for doc_id, value in outcome.assignments.items()
            if doc_id in inputs.eligible
        }
        # hard assignment: a document belongs to exactly one neighborhood
        assignments.update(given)
        summaries.append(
            ClusterSummary(
                id=cluster,
                size=nbhd.size,
                retained=len(nbhd.members),
                p=None if outcome.proportion is None else float(outcome.proportion),
                decision=outcome.decision,
                assigned=len(given),
            )
        )
    return assignments, summaries


@dataclass(frozen=True)
class AugmentationReport:
    goal: str
    params: PropagationParams
    clusters: tuple
    synthetic_1: int
    synthetic_0: int
    skipped: int
    warnings: tuple = ()

    def to_dict(self):
        return {
            "goal": self.goal,
            "params": self.params.to_dict(),
            "clusters": [summary.to_dict() for summary in self.clusters],
            "totals": {
                "synthetic_1": self.synthetic_1,
                "synthetic_0": self.synthetic_0,
                "skipped": self.skipped,
            },
            "warnings": list(self.warnings),
        }

    def save(self, path):
        return write_json(path, self.to_dict())


@dataclass(frozen=True, eq=False)
class AugmentationResult:
    corpus: Corpus
    report: AugmentationReport
    model: ClusterModel
    assignments: Mapping[str, int] = field(default_factory=dict)


def build_report(goal, params, assignments, summaries):
    values = list(assignments.values())
    warnings = []
    if values.count(1) == 0:
        warnings.append("No positive label was propagated.")
    return AugmentationReport(
        goal=goal,
        params=params,
        clusters=tuple(summaries),
        synthetic_1=values.count(1),
        synthetic_0=values.count(0),
        skipped=sum(1 for s in summaries if s.decision is Decision.SKIP),
        warnings=tuple(warnings),
    )


def augment(corpus: Corpus, embeddings, params: PropagationParams, goal, seed, split=None):
    """
    Cluster the corpus for ``goal`` and return it with synthetic labels on
    every unlabeled document that falls inside a decided neighborhood.

    With ``split`` the held-out labeled documents are left out of clustering
    entirely; replicas cluster at the position of their source document.
    """
    excluded = split.held_out() if split is not None else ()
    inputs = clustering_input(corpus, embeddings, goal, excluded=excluded)
    model = kmeans_fit(inputs.matrix, params.clusters, seed)
    assignments, summaries = propagate_clusters(model, inputs, params)
    report = build_report(goal, params, assignments, summaries)

    for warning in report.warnings:
        logger.warning("%s (goal %s, params %s)", warning, goal, params.to_dict())
    logger.info(
        "Augmented %s with K=%d radius=%s threshold=%s: %d synthetic 1, %d synthetic 0, "
        "%d neighborhoods skipped",
        goal,
        params.clusters,
        params.radius_pct,
        params.threshold_pct,
        report.synthetic_1,
        report.synthetic_0,
        report.skipped,
    )

    if not assignments:
        return AugmentationResult(corpus=corpus, report=report, model=model)
    documents = [
        doc.with_synthetic(goal, assignments[doc.id]) if doc.id in assignments else doc
        for doc in corpus
    ]
    augmented = corpus.with_documents(documents)
    if augmented.original_label_digest() != corpus.original_label_digest():
        raise StageError(f"Augmentation of {goal} changed original labels.", "augment", goal)
    return AugmentationResult(
        corpus=augmented, report=report, model=model, assignments=assignments
    )
