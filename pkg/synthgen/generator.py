from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from core.artifacts import write_json
from core.exceptions import ConfigError
from corpus.cleaning import clean_text
from corpus.documents import Corpus, Document, LabelState
from corpus.loaders import dump_corpus

logger = logging.getLogger(__name__)

# token alphabet without the letter used as a separator
ALPHABET = "abcdefghijklmnopqrstuvwxy"


def _letters(number):
    digits = []
    while True:
        number, rest = divmod(number, len(ALPHABET))
        digits.append(ALPHABET[rest])
        if number == 0:
            return "".join(reversed(digits))


def private_token(topic, index):
    return f"t{_letters(topic)}z{_letters(index)}"


def shared_token(index):
    return f"s{_letters(index)}"


@dataclass(frozen=True)
class SyntheticSpec:
    docs_per_topic: tuple
    private_vocab: int = 200
    shared_vocab: int = 300
    doc_length: tuple = (40, 80)
    labeled_fraction: float = 0.1
    positive_topics: Mapping[str, tuple] = field(default_factory=lambda: {"g1": (1,)})
    noise: float = 0.0
    separability: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "docs_per_topic", tuple(self.docs_per_topic))
        object.__setattr__(self, "doc_length", tuple(self.doc_length))
        object.__setattr__(
            self,
            "positive_topics",
            MappingProxyType({g: tuple(t) for g, t in self.positive_topics.items()}),
        )
        if len(self.docs_per_topic) < 1 or min(self.docs_per_topic) < 1:
            raise ConfigError("Every topic needs at least one document.")
        if not 0 < self.labeled_fraction <= 1:
            raise ConfigError(f"labeled_fraction must lie in (0, 1], got {self.labeled_fraction}.")
        if not 0 <= self.noise < 0.5:
            raise ConfigError(f"noise must lie in [0, 0.5), got {self.noise}.")
        if not 0 < self.separability <= 1:
            raise ConfigError(f"separability must lie in (0, 1], got {self.separability}.")
        low, high = self.doc_length
        if not 1 <= low <= high:
            raise ConfigError(f"doc_length must be an increasing positive range, got {self.doc_length}.")
        if self.private_vocab < 1 or (self.separability < 1 and self.shared_vocab < 1):
            raise ConfigError("Vocabulary sizes must be positive.")
        for goal, topics in self.positive_topics.items():
            if any(not 0 <= t < self.topics for t in topics):
                raise ConfigError(f"Goal {goal!r} names a topic outside 0..{self.topics - 1}.")

    @property
    def topics(self):
        return len(self.docs_per_topic)

    @property
    def goals(self):
        return tuple(sorted(self.positive_topics))


@dataclass(frozen=True)
class GroundTruth:
    topics: Mapping[str, int]
    labels: Mapping[str, Mapping[str, int]]

    def label(self, doc_id, goal):
        return self.labels[doc_id][goal]

    def to_dict(self):
        return {
            doc_id: {"topic": self.topics[doc_id], "labels": dict(self.labels[doc_id])}
            for doc_id in sorted(self.topics)
        }

    def save(self, path):
        return write_json(path, self.to_dict())


def _zipf(size):
    weights = 1.0 / np.arange(1, size + 1)
    return weights / weights.sum()


def generate(spec: SyntheticSpec):
    """
    Seeded topic-mixture corpus.

    Every token comes from the document's topic-private vocabulary with
    probability ``separability`` and from the shared vocabulary otherwise,
    Zipf-weighted within each vocabulary. Exactly
    ``round(labeled_fraction * n)`` documents of each topic carry original
    labels, each flipped with probability ``noise``.
    """
    rng = np.random.default_rng(spec.seed)
    private_p = _zipf(spec.private_vocab)
    shared_p = _zipf(spec.shared_vocab) if spec.shared_vocab else None
    shared = [shared_token(i) for i in range(spec.shared_vocab)]

    drafts = []
    for topic, count in enumerate(spec.docs_per_topic):
        private = [private_token(topic, i) for i in range(spec.private_vocab)]
        labeled = set(
            rng.permutation(count)[: int(round(spec.labeled_fraction * count))].tolist()
        )
        for i in range(count):
            length = int(rng.integers(spec.doc_length[0], spec.doc_length[1] + 1))
            from_private = rng.random(length) < spec.separability
            private_draws = rng.choice(spec.private_vocab, size=length, p=private_p)
            if shared_p is not None:
                shared_draws = rng.choice(spec.shared_vocab, size=length, p=shared_p)
            tokens = [
                private[private_draws[j]] if from_private[j] else shared[shared_draws[j]]
                for j in range(length)
            ]
            truth = {
                goal: int(topic in topics) for goal, topics in spec.positive_topics.items()
            }
            observed = None
            if i in labeled:
                observed = {
                    goal: value ^ int(rng.random() < spec.noise)
                    for goal, value in truth.items()
                }
            drafts.append((topic, " ".join(tokens), truth, observed))

    order = rng.permutation(len(drafts))
    width = max(5, len(str(len(drafts))))
    documents, topics, truths = [], {}, {}
    for position, draft_index in enumerate(order):
        topic, text, truth, observed = drafts[draft_index]
        doc_id = f"d{position:0{width}d}"
        labels = {g: LabelState(v) for g, v in (observed or {}).items()}
        documents.append(
            Document(id=doc_id, raw_text=text, clean_text=clean_text(text), labels=labels)
        )
        topics[doc_id] = topic
        truths[doc_id] = truth

    corpus = Corpus(documents=documents, goals=spec.goals)
    logger.info(
        "Generated %d documents over %d topics (%d labeled)",
        len(corpus),
        spec.topics,
        sum(1 for _, _, _, observed in drafts if observed),
    )
    return corpus, GroundTruth(topics=topics, labels=truths)


def write_synthetic(spec, directory):
    directory = Path(directory)
    corpus, truth = generate(spec)
    dump_corpus(corpus, directory / "corpus.jsonl")
    truth.save(directory / "truth.json")
    return corpus, truth
