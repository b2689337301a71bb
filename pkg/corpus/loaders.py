"""Corpus JSON-lines reading and writing."""
import json
import logging
from pathlib import Path

from core.exceptions import DataError, MissingArtifactError
from corpus.cleaning import clean_text
from corpus.documents import (
    Corpus,
    Document,
    DuplicateDocumentError,
    LabelState,
    Provenance,
    UnknownGoalError,
)

logger = logging.getLogger(__name__)


class CorpusFormatError(DataError):
    def __init__(self, path, line_number, reason):
        super().__init__(f"{path}:{line_number}: {reason}")
        self.path = path
        self.line_number = line_number


def _parse_record(record, path, line_number, goals):
    if not isinstance(record, dict):
        raise CorpusFormatError(path, line_number, "record is not a JSON object")
    doc_id = record.get("id")
    text = record.get("text")
    if not isinstance(doc_id, str) or not doc_id:
        raise CorpusFormatError(path, line_number, "'id' must be a non-empty string")
    if not isinstance(text, str):
        raise CorpusFormatError(path, line_number, "'text' must be a string")

    raw_labels = record.get("labels") or {}
    provenance = record.get("provenance") or {}
    if not isinstance(raw_labels, dict) or not isinstance(provenance, dict):
        raise CorpusFormatError(path, line_number, "'labels' must be an object")

    labels = {}
    for goal, value in raw_labels.items():
        if goals is not None and goal not in goals:
            raise UnknownGoalError(
                f"{path}:{line_number}: unknown goal {goal!r} "
                f"(expected one of {sorted(goals)})"
            )
        if value is None:
            continue
        if value not in (0, 1) or isinstance(value, bool):
            raise CorpusFormatError(
                path, line_number, f"label for {goal!r} must be 0, 1 or null"
            )
        try:
            origin = Provenance(provenance.get(goal, Provenance.ORIGINAL.value))
        except ValueError:
            raise CorpusFormatError(
                path, line_number, f"unknown provenance for {goal!r}"
            ) from None
        labels[goal] = LabelState(int(value), origin)

    replica_of = record.get("replica_of")
    return Document(
        id=doc_id,
        raw_text=text,
        clean_text=clean_text(text),
        labels=labels,
        replica_of=replica_of,
    )


def read_documents(path, goals=None):
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(path, "generate")
    documents = []
    goal_keys = set()
    seen = set()
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(path, line_number, exc.msg) from None
            doc = _parse_record(record, path, line_number, goals)
            goal_keys.update(record.get("labels") or {})
            if doc.id in seen:
                raise DuplicateDocumentError(doc.id)
            seen.add(doc.id)
            documents.append(doc)
    return documents, goal_keys


def load_corpus(path, goals=None, extra_paths=()):
    """
    Read one or more JSON-lines files into a single Corpus.

    When ``goals`` is given, labels for any other goal are rejected; otherwise
    the goal list is every goal key seen, sorted.
    """
    documents, goal_keys = read_documents(path, goals)
    for extra in extra_paths:
        more, more_keys = read_documents(extra, goals)
        documents.extend(more)
        goal_keys |= more_keys

    if goals is None:
        goals = sorted(goal_keys)
    corpus = Corpus(documents=tuple(documents), goals=tuple(goals))
    logger.info("Loaded %d documents for goals %s from %s", len(corpus), corpus.goals, path)
    return corpus


def document_record(doc, goals):
    record = {
        "id": doc.id,
        "text": doc.raw_text,
        "labels": {goal: doc.label(goal).value for goal in goals},
    }
    synthetic = {
        goal: Provenance.SYNTHETIC.value
        for goal in goals
        if doc.label(goal).is_synthetic
    }
    if synthetic:
        record["provenance"] = {
            goal: synthetic.get(goal, Provenance.ORIGINAL.value)
            for goal in goals
            if doc.label(goal).is_labeled
        }
    if doc.replica_of is not None:
        record["replica_of"] = doc.replica_of
    return record


def dump_corpus(corpus, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for doc in corpus:
            handle.write(
                json.dumps(document_record(doc, corpus.goals), sort_keys=True, ensure_ascii=False)
            )
            handle.write("\n")
    return path
