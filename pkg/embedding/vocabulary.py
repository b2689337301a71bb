from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType

from core.exceptions import DataError
from corpus.cleaning import tokenize


class EmptyVocabularyError(DataError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple
    document_frequency: tuple
    total_docs: int
    min_count: int
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "document_frequency", tuple(self.document_frequency))
        object.__setattr__(
            self, "index", MappingProxyType({t: i for i, t in enumerate(self.tokens)})
        )

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def df(self, token):
        return self.document_frequency[self.index[token]]

    def to_dict(self):
        return {
            "tokens": list(self.tokens),
            "document_frequency": list(self.document_frequency),
            "total_docs": self.total_docs,
            "min_count": self.min_count,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def build_vocab(corpus, min_count=2) -> Vocabulary:
    """
    Document-frequency vocabulary over the cleaned text of non-replica docs.

    Tokens are ordered by descending document frequency, ties lexicographic.
    """
    documents = [doc for doc in corpus if not doc.is_replica]
    if not documents:
        raise DataError("Cannot build a vocabulary from an empty corpus.")

    frequency = Counter()
    for doc in documents:
        frequency.update(set(tokenize(doc.clean_text)))

    kept = sorted(
        ((token, count) for token, count in frequency.items() if count >= min_count),
        key=lambda item: (-item[1], item[0]),
    )
    if not kept:
        raise EmptyVocabularyError(
            f"No token appears in at least {min_count} documents; lower min_count."
        )
    return Vocabulary(
        tokens=[token for token, _ in kept],
        document_frequency=[count for _, count in kept],
        total_docs=len(documents),
        min_count=min_count,
    )
