import logging
from dataclasses import replace

from core.exceptions import ConfigError, DataError
from corpus.documents import POSITIVE
from corpus.splits import Split

logger = logging.getLogger(__name__)

DEFAULT_TARGET_FRACTION = 0.20
DEFAULT_MAX_REPLICAS = 5


class NothingToUpsampleError(DataError):
    pass


def replicas_needed(n_positive, n_negative, target, cap):
    needed = 0
    while needed < cap and (n_positive + needed) < target * (n_positive + n_negative + needed):
        needed += 1
    return needed


def upsample(
    corpus,
    goal,
    split,
    target_positive_fraction=DEFAULT_TARGET_FRACTION,
    max_replicas=DEFAULT_MAX_REPLICAS,
):
    """
    Duplicate positive training documents until they make up
    ``target_positive_fraction`` of the labeled training set.

    Replicas are appended round-robin over the positives (sorted by id) with
    ids ``<source>#r<n>``; they never belong to any split, so they can only
    ever be seen by clustering.
    """
    if not 0 < target_positive_fraction < 1:
        raise ConfigError(
            f"target_positive_fraction must lie in (0, 1), got {target_positive_fraction}."
        )
    if max_replicas < 0:
        raise ConfigError(f"max_replicas must be >= 0, got {max_replicas}.")

    train_ids = set(split.ids(Split.TRAIN))
    train = [doc for doc in corpus.labeled(goal) if doc.id in train_ids]
    positives = sorted(
        (doc for doc in train if doc.original_value(goal) == 1), key=lambda doc: doc.id
    )
    n_negative = len(train) - len(positives)
    if not positives:
        raise NothingToUpsampleError(
            f"Goal {goal!r} has no positive documents in the training split."
        )

    needed = replicas_needed(
        len(positives), n_negative, target_positive_fraction, max_replicas * len(positives)
    )
    if needed == 0:
        logger.info("Upsample %s: positive fraction already at target", goal)
        return corpus

    replicas = []
    for index in range(needed):
        source = positives[index % len(positives)]
        replica_id = f"{source.id}#r{index // len(positives) + 1}"
        if replica_id in corpus:
            raise DataError(f"Replica id {replica_id!r} collides with an existing document.")
        replicas.append(
            replace(source, id=replica_id, labels={goal: POSITIVE}, replica_of=source.id)
        )

    logger.info(
        "Upsample %s: %d positives / %d negatives, added %d replicas",
        goal,
        len(positives),
        n_negative,
        needed,
    )
    return corpus.with_documents(corpus.documents + tuple(replicas))
