from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from types import MappingProxyType
from typing import Mapping

import numpy as np

from core.artifacts import read_json, write_json
from core.exceptions import DataError

logger = logging.getLogger(__name__)

MIN_LABELED = 5
SPLIT_FRACTIONS = (Fraction(3, 5), Fraction(1, 5), Fraction(1, 5))


class InsufficientLabelsError(DataError):
    pass


class EmptySplitError(DataError):
    pass


class Split(str, enum.Enum):
    TRAIN = "train"
    VALIDATION = "val"
    TEST = "test"


SPLIT_ORDER = (Split.TRAIN, Split.VALIDATION, Split.TEST)


@dataclass(frozen=True)
class SplitAssignment:
    goal: str
    seed: int
    assignment: Mapping[str, Split]

    def __post_init__(self):
        object.__setattr__(self, "assignment", MappingProxyType(dict(self.assignment)))

    def ids(self, split):
        return sorted(doc_id for doc_id, value in self.assignment.items() if value is split)

    def held_out(self):
        return {
            doc_id for doc_id, value in self.assignment.items() if value is not Split.TRAIN
        }

    def sizes(self):
        return tuple(len(self.ids(split)) for split in SPLIT_ORDER)

    def to_dict(self):
        return {
            "seed": self.seed,
            "goal": self.goal,
            "assignment": {
                doc_id: self.assignment[doc_id].value for doc_id in sorted(self.assignment)
            },
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            goal=data["goal"],
            seed=data["seed"],
            assignment={doc_id: Split(value) for doc_id, value in data["assignment"].items()},
        )

    def save(self, path):
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path, "tune"))


def largest_remainder(total, fractions):
    """Integer apportionment of ``total``; remainder ties go to the earlier slot."""
    quotas = [total * fraction for fraction in fractions]
    counts = [math.floor(quota) for quota in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def _stratified_counts(sizes, n_positive):
    positives = largest_remainder(n_positive, SPLIT_FRACTIONS)
    # never more positives than seats in a split
    for i, size in enumerate(sizes):
        while positives[i] > size:
            positives[i] -= 1
            spare = max(
                (j for j in range(len(sizes)) if positives[j] < sizes[j]),
                key=lambda j: sizes[j] - positives[j],
            )
            positives[spare] += 1
    # one positive per split whenever there are enough to go round
    if n_positive >= len(sizes):
        for i in range(len(sizes)):
            if positives[i] == 0 and sizes[i] > 0:
                donor = max(range(len(sizes)), key=lambda j: (positives[j], -j))
                positives[donor] -= 1
                positives[i] += 1
    return positives


def split_labeled(corpus, goal, seed) -> SplitAssignment:
    """60/20/20 split of the originally labeled documents, stratified by label."""
    labeled = corpus.labeled(goal)
    if len(labeled) < MIN_LABELED:
        raise InsufficientLabelsError(
            f"Goal {goal!r} has {len(labeled)} labeled documents; "
            f"at least {MIN_LABELED} are required to split."
        )

    sizes = largest_remainder(len(labeled), SPLIT_FRACTIONS)
    positives = sorted(doc.id for doc in labeled if doc.original_value(goal) == 1)
    negatives = sorted(doc.id for doc in labeled if doc.original_value(goal) == 0)
    positive_counts = _stratified_counts(sizes, len(positives))
    negative_counts = [size - pos for size, pos in zip(sizes, positive_counts)]

    rng = np.random.default_rng(seed)
    positives = [positives[i] for i in rng.permutation(len(positives))]
    negatives = [negatives[i] for i in rng.permutation(len(negatives))]

    assignment = {}
    for ids, counts in ((positives, positive_counts), (negatives, negative_counts)):
        start = 0
        for split, count in zip(SPLIT_ORDER, counts):
            for doc_id in ids[start : start + count]:
                assignment[doc_id] = split
            start += count

    result = SplitAssignment(goal=goal, seed=seed, assignment=assignment)
    logger.info("Split %s: train/val/test = %s", goal, result.sizes())
    return result
