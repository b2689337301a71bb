from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from types import MappingProxyType
from typing import Iterator, Mapping, Optional

from core.exceptions import DataError


class DuplicateDocumentError(DataError):
    def __init__(self, doc_id):
        super().__init__(f"Duplicate document id {doc_id!r}.")
        self.doc_id = doc_id


class UnknownGoalError(DataError):
    pass


class LabelConflictError(DataError):
    pass


class Provenance(str, enum.Enum):
    ORIGINAL = "original"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class LabelState:
    value: Optional[int] = None
    provenance: Provenance = Provenance.ORIGINAL

    def __post_init__(self):
        if self.value not in (None, 0, 1):
            raise DataError(f"Label value must be 0, 1 or null, got {self.value!r}.")
        if self.value is None and self.provenance is Provenance.SYNTHETIC:
            raise DataError("An unlabeled state cannot carry synthetic provenance.")

    @property
    def is_labeled(self):
        return self.value is not None

    @property
    def is_original(self):
        return self.value is not None and self.provenance is Provenance.ORIGINAL

    @property
    def is_synthetic(self):
        return self.provenance is Provenance.SYNTHETIC


UNLABELED = LabelState()
POSITIVE = LabelState(1)
NEGATIVE = LabelState(0)


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    clean_text: str
    labels: Mapping[str, LabelState] = field(default_factory=dict)
    replica_of: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", MappingProxyType(dict(self.labels)))

    def label(self, goal) -> LabelState:
        return self.labels.get(goal, UNLABELED)

    def original_value(self, goal) -> Optional[int]:
        state = self.label(goal)
        return state.value if state.is_original else None

    @property
    def is_replica(self):
        return self.replica_of is not None

    @property
    def source_id(self):
        """Id whose embedding this document shares."""
        return self.replica_of or self.id

    def with_synthetic(self, goal, value) -> Document:
        if self.label(goal).is_original:
            raise LabelConflictError(
                f"Document {self.id!r} already carries an original label for {goal!r}."
            )
        labels = dict(self.labels)
        labels[goal] = LabelState(value, Provenance.SYNTHETIC)
        return replace(self, labels=labels)


@dataclass(frozen=True)
class LabelTally:
    goal: str
    original_0: int
    original_1: int
    synthetic_0: int
    synthetic_1: int
    unlabeled: int
    replicas: int

    @property
    def total_0(self):
        return self.original_0 + self.synthetic_0

    @property
    def total_1(self):
        return self.original_1 + self.synthetic_1


@dataclass(frozen=True)
class Corpus:
    documents: tuple
    goals: tuple

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "goals", tuple(self.goals))
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise DuplicateDocumentError(doc.id)
            seen.add(doc.id)
            unknown = set(doc.labels) - set(self.goals)
            if unknown:
                raise UnknownGoalError(
                    f"Document {doc.id!r} is labeled for unknown goal(s) "
                    f"{sorted(unknown)}; corpus goals are {list(self.goals)}."
                )

    def __len__(self):
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __contains__(self, doc_id):
        return doc_id in self.by_id

    @cached_property
    def by_id(self) -> Mapping[str, Document]:
        return MappingProxyType({doc.id: doc for doc in self.documents})

    def get(self, doc_id) -> Document:
        return self.by_id[doc_id]

    @property
    def ids(self):
        return [doc.id for doc in self.documents]

    def check_goal(self, goal):
        if goal not in self.goals:
            raise UnknownGoalError(
                f"Unknown goal {goal!r}; corpus goals are {list(self.goals)}."
            )

    def labeled(self, goal, include_replicas=False):
        """Documents carrying an original label for ``goal``."""
        self.check_goal(goal)
        return [
            doc
            for doc in self.documents
            if doc.label(goal).is_original and (include_replicas or not doc.is_replica)
        ]

    def with_documents(self, documents) -> Corpus:
        return Corpus(documents=tuple(documents), goals=self.goals)

    def label_tally(self, goal) -> LabelTally:
        self.check_goal(goal)
        counts = {"original_0": 0, "original_1": 0, "synthetic_0": 0, "synthetic_1": 0}
        unlabeled = replicas = 0
        for doc in self.documents:
            if doc.is_replica:
                replicas += 1
                continue
            state = doc.label(goal)
            if not state.is_labeled:
                unlabeled += 1
            else:
                counts[f"{state.provenance.value}_{state.value}"] += 1
        return LabelTally(goal=goal, unlabeled=unlabeled, replicas=replicas, **counts)

    def original_label_digest(self):
        """Hash of every original label; stable across any pipeline stage."""
        payload = sorted(
            (doc.id, goal, state.value)
            for doc in self.documents
            if not doc.is_replica
            for goal, state in doc.labels.items()
            if state.is_original
        )
        return hashlib.sha256(json.dumps(payload).encode("utf-8")).hexdigest()
