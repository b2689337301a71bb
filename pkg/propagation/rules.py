from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping, Optional

from clustering.kmeans import ClusterModel, rank_by_centroid_distance
from core.exceptions import ConfigError, StageError


def exact(value):
    """Percentages compared as decimals, never as binary floats."""
    return Fraction(str(value))


class Decision(str, enum.Enum):
    PROPAGATE_1 = "propagate_1"
    PROPAGATE_0 = "propagate_0"
    SKIP = "skip"


@dataclass(frozen=True, order=True)
class PropagationParams:
    clusters: int
    radius_pct: float
    threshold_pct: float

    def __post_init__(self):
        clusters = self.clusters
        if isinstance(clusters, bool) or int(clusters) != clusters or clusters < 2:
            raise ConfigError(f"clusters must be an integer >= 2, got {self.clusters}.")
        if not 0 < self.radius_pct <= 100:
            raise ConfigError(f"radius_pct must lie in (0, 100], got {self.radius_pct}.")
        if not 0 < self.threshold_pct < 100:
            raise ConfigError(f"threshold_pct must lie in (0, 100), got {self.threshold_pct}.")
        object.__setattr__(self, "clusters", int(self.clusters))

    def to_dict(self):
        return {
            "clusters": self.clusters,
            "radius_pct": self.radius_pct,
            "threshold_pct": self.threshold_pct,
        }


def retained_count(size, radius_pct):
    return max(1, math.floor(size * exact(radius_pct) / 100))


@dataclass(frozen=True)
class Neighborhood:
    cluster: int
    size: int
    members: tuple
    positives: int
    negatives: int
    unlabeled: int

    def __post_init__(self):
        if self.positives + self.negatives + self.unlabeled != len(self.members):
            raise StageError(
                f"Neighborhood of cluster {self.cluster} counts do not sum to its members.",
                stage="augment",
            )


def _count(members, labels):
    values = [labels.get(doc_id) for doc_id in members]
    return values.count(1), values.count(0), values.count(None)


def select_neighborhood(
    model: ClusterModel, cluster, radius_pct, labels: Optional[Mapping] = None
) -> Neighborhood:
    """
    The ``max(1, floor(n * radius_pct / 100))`` members of ``cluster``
    closest to its centroid. ``labels`` maps document ids to their visible
    original label (0, 1 or None); without it every member counts as
    unlabeled.
    """
    ranked = rank_by_centroid_distance(model, cluster)
    members = tuple(ranked[: retained_count(len(ranked), radius_pct)])
    positives, negatives, unlabeled = _count(members, labels or {})
    return Neighborhood(
        cluster=cluster,
        size=len(ranked),
        members=members,
        positives=positives,
        negatives=negatives,
        unlabeled=unlabeled,
    )


@dataclass(frozen=True)
class NeighborhoodOutcome:
    neighborhood: Neighborhood
    decision: Decision
    proportion: Optional[Fraction] = None
    assignments: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", MappingProxyType(dict(self.assignments)))


def propagate(nbhd: Neighborhood, labels: Mapping, threshold_pct) -> NeighborhoodOutcome:
    positives, negatives, _ = _count(nbhd.members, labels)
    if positives + negatives == 0:
        return NeighborhoodOutcome(neighborhood=nbhd, decision=Decision.SKIP)

    proportion = Fraction(positives, positives + negatives)
    # at least the threshold
    if proportion >= exact(threshold_pct) / 100:
        decision, value = Decision.PROPAGATE_1, 1
    else:
        decision, value = Decision.PROPAGATE_0, 0
    assignments = {doc_id: value for doc_id in nbhd.members if labels.get(doc_id) is None}
    return NeighborhoodOutcome(
        neighborhood=nbhd, decision=decision, proportion=proportion, assignments=assignments
    )
