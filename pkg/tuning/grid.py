"""Masked-validation grid search over propagation parameters."""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

from joblib import Parallel, delayed

from clustering.kmeans import kmeans_fit
from core.artifacts import write_json
from core.exceptions import ConfigError, DataError, StageError
from corpus.splits import EmptySplitError, Split
from propagation.augmentation import clustering_input, propagate_clusters
from propagation.rules import PropagationParams

logger = logging.getLogger(__name__)

DEFAULT_CLUSTERS = (5, 10, 25, 50, 100)
DEFAULT_RADII = (5, 10, 25, 100)
DEFAULT_THRESHOLDS = (50, 60, 70)
DEFAULT_MIN_COVERAGE = 0.25

GRID_COLUMNS = (
    "goal",
    "K",
    "radius",
    "threshold",
    "accuracy",
    "sensitivity",
    "coverage",
    "assigned",
    "skipped",
    "valid",
)


class GridExhaustedError(DataError):
    pass


@dataclass(frozen=True)
class ParamGrid:
    clusters: tuple = DEFAULT_CLUSTERS
    radii: tuple = DEFAULT_RADII
    thresholds: tuple = DEFAULT_THRESHOLDS
    min_coverage: float = DEFAULT_MIN_COVERAGE

    def __post_init__(self):
        for name in ("clusters", "radii", "thresholds"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigError(f"Grid list {name!r} is empty.")
            if len(set(values)) != len(values):
                raise ConfigError(f"Grid list {name!r} repeats a value: {list(values)}.")
            object.__setattr__(self, name, values)
        if not 0 <= self.min_coverage <= 1:
            raise ConfigError(f"min_coverage must lie in [0, 1], got {self.min_coverage}.")
        # validates every combination up front
        self.combos()

    def combos(self):
        return [
            PropagationParams(k, radius, threshold)
            for k, radius, threshold in itertools.product(
                self.clusters, self.radii, self.thresholds
            )
        ]

    def __len__(self):
        return len(self.clusters) * len(self.radii) * len(self.thresholds)


@dataclass(frozen=True)
class MaskedScore:
    params: PropagationParams
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    masked: int = 0

    @property
    def assigned(self):
        return self.tp + self.tn + self.fp + self.fn

    @property
    def skipped(self):
        return self.masked - self.assigned

    @property
    def valid(self):
        return self.assigned > 0

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.assigned if self.valid else 0.0

    @property
    def sensitivity(self):
        # nothing recovered when no masked positive was assigned
        positives = self.tp + self.fn
        return self.tp / positives if positives else 0.0

    @property
    def coverage(self):
        return self.assigned / self.masked if self.masked else 0.0

    @property
    def score(self):
        return (self.accuracy + self.sensitivity) / 2

    def row(self, goal):
        return {
            "goal": goal,
            "K": self.params.clusters,
            "radius": self.params.radius_pct,
            "threshold": self.params.threshold_pct,
            "accuracy": round(self.accuracy, 6),
            "sensitivity": round(self.sensitivity, 6),
            "coverage": round(self.coverage, 6),
            "assigned": self.assigned,
            "skipped": self.skipped,
            "valid": int(self.valid),
        }


def score_assignments(params, assignments, truth):
    """Confusion counts of ``assignments`` over the masked ``truth`` map."""
    counts = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    for doc_id, actual in truth.items():
        if doc_id not in assignments:
            continue
        predicted = assignments[doc_id]
        key = ("t" if predicted == actual else "f") + ("p" if predicted == 1 else "n")
        counts[key] += 1
    return MaskedScore(params=params, masked=len(truth), **counts)


def _masked_inputs(corpus, split, goal, which):
    masked = split.ids(which)
    if not masked:
        raise EmptySplitError(f"The {which.value} split of {goal} is empty.")
    other = Split.TEST if which is Split.VALIDATION else Split.VALIDATION
    truth = {doc_id: corpus.get(doc_id).original_value(goal) for doc_id in masked}
    return masked, split.ids(other), truth


def evaluate_masked(
    corpus, split, embeddings, params, goal, seed, which=Split.VALIDATION
) -> MaskedScore:
    """
    Re-cluster with the ``which`` split entering as unlabeled and score the
    propagated labels against the hidden originals.
    """
    masked, excluded, truth = _masked_inputs(corpus, split, goal, which)
    inputs = clustering_input(corpus, embeddings, goal, masked=masked, excluded=excluded)
    model = kmeans_fit(inputs.matrix, params.clusters, seed)
    assignments, _ = propagate_clusters(model, inputs, params)
    return score_assignments(params, assignments, truth)


def _scores_for_k(inputs, truth, k, grid, seed):
    combos = [p for p in grid.combos() if p.clusters == k]
    try:
        model = kmeans_fit(inputs.matrix, k, seed)
    except DataError as exc:
        logger.warning("K=%d cannot be fitted, combos marked invalid: %s", k, exc)
        return [MaskedScore(params=p, masked=len(truth)) for p in combos]
    return [
        score_assignments(p, propagate_clusters(model, inputs, p)[0], truth) for p in combos
    ]


def selection_key(score: MaskedScore):
    """Higher score first, then fewer clusters, smaller radius, higher threshold."""
    p = score.params
    return (-score.score, p.clusters, p.radius_pct, -p.threshold_pct)


@dataclass(frozen=True)
class ValidationReport:
    goal: str
    scores: tuple
    best: MaskedScore
    min_coverage: float
    seed: int
    test: MaskedScore = field(default=None)

    def rows(self):
        return [score.row(self.goal) for score in self.scores]

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=GRID_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows())
        return path

    def best_record(self):
        best = self.best
        record = {
            "goal": self.goal,
            "clusters": best.params.clusters,
            "distance": best.params.radius_pct,
            "threshold": best.params.threshold_pct,
            "accuracy": best.accuracy,
            "sensitivity": best.sensitivity,
            "coverage": best.coverage,
            "score": best.score,
            "min_coverage": self.min_coverage,
            "seed": self.seed,
        }
        if self.test is not None:
            record.update(
                test_accuracy=self.test.accuracy,
                test_sensitivity=self.test.sensitivity,
                test_coverage=self.test.coverage,
                drift=self.test.accuracy - best.accuracy,
            )
        return record

    def write_best(self, path):
        return write_json(path, self.best_record())


def select_best(scores, min_coverage):
    eligible = [s for s in scores if s.valid and s.coverage >= min_coverage]
    if not eligible:
        raise GridExhaustedError(
            f"No parameter combination assigned labels to at least {min_coverage:.0%} of the "
            "masked documents; widen the grid (larger radii, fewer clusters) or lower "
            "grid.min_coverage."
        )
    best = min(eligible, key=selection_key)
    if any(s.score > best.score for s in eligible):
        raise StageError("Grid selection is not the maximum over eligible combos.", "tune")
    return best


def grid_search(corpus, split, embeddings, grid: ParamGrid, goal, seed, workers=1):
    """
    Evaluate every combination of ``grid`` on the validation split.

    One k-means fit per cluster count serves all radius and threshold pairs;
    fits run on up to ``workers`` processes and results are assembled in grid
    order.
    """
    masked, excluded, truth = _masked_inputs(corpus, split, goal, Split.VALIDATION)
    inputs = clustering_input(corpus, embeddings, goal, masked=masked, excluded=excluded)
    logger.info(
        "Grid search for %s: %d combos over %d rows, %d masked",
        goal,
        len(grid),
        len(inputs.matrix.ids),
        len(masked),
    )
    per_k = Parallel(n_jobs=workers)(
        delayed(_scores_for_k)(inputs, truth, k, grid, seed) for k in grid.clusters
    )
    scores = tuple(itertools.chain.from_iterable(per_k))
    best = select_best(scores, grid.min_coverage)
    logger.info(
        "Selected K=%d radius=%s threshold=%s for %s (accuracy %.3f, sensitivity %.3f, "
        "coverage %.3f)",
        best.params.clusters,
        best.params.radius_pct,
        best.params.threshold_pct,
        goal,
        best.accuracy,
        best.sensitivity,
        best.coverage,
    )
    return ValidationReport(
        goal=goal, scores=scores, best=best, min_coverage=grid.min_coverage, seed=seed
    )


def test_confirm(corpus, split, embeddings, best_params, goal, seed) -> MaskedScore:
    """The masked evaluation of ``best_params`` repeated on the test split."""
    return evaluate_masked(corpus, split, embeddings, best_params, goal, seed, Split.TEST)
