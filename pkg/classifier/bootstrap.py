"""
Paired bootstrap comparison of classifiers trained on the original and the
augmented labels of one goal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from classifier.network import ClassifierConfig, fit, metrics
from core.artifacts import write_json
from core.exceptions import ConfigError, DataError, StageError

logger = logging.getLogger(__name__)

ARMS = ("original", "augmented")
METRICS = ("accuracy", "sensitivity")
DEFAULT_ITERATIONS = 200
DEFAULT_SAMPLE_FRACTION = 0.8
DEFAULT_MAX_REDRAWS = 10
LOGGED_DRAWS = 5


class DegenerateSamplesError(DataError):
    pass


class RedrawExhaustedError(DataError):
    pass


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch_t_test(a, b) -> WelchResult:
    """Two-sided Welch t-test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DegenerateSamplesError("Welch's test needs at least two values per sample.")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va == 0 and vb == 0:
        raise DegenerateSamplesError("Both samples have zero variance.")
    t = (a.mean() - b.mean()) / np.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2 * stats.t.sf(abs(t), df)
    return WelchResult(t=float(t), df=float(df), p=float(min(p, 1.0)))


def quantiles(values):
    values = np.asarray(values, dtype=np.float64)
    q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75])
    return {
        "min": float(values.min()),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
        "max": float(values.max()),
        "mean": float(values.mean()),
    }


@dataclass(frozen=True)
class BootstrapReport:
    goal: str
    iterations: int
    seed: int
    sample_fraction: float
    arms: dict
    tests: dict
    redraws: int = 0

    def mean(self, arm, metric):
        return float(np.mean(self.arms[arm][metric]))

    def summary_row(self):
        def p(metric):
            result = self.tests.get(metric)
            return None if result is None else result.p

        return {
            "goal": self.goal,
            "orig_acc": self.mean("original", "accuracy"),
            "orig_sens": self.mean("original", "sensitivity"),
            "aug_acc": self.mean("augmented", "accuracy"),
            "aug_sens": self.mean("augmented", "sensitivity"),
            "p_acc": p("accuracy"),
            "p_sens": p("sensitivity"),
        }

    def boxplot_rows(self):
        return [
            {"goal": self.goal, "arm": arm, "metric": metric, **quantiles(self.arms[arm][metric])}
            for arm in ARMS
            for metric in METRICS
        ]

    def to_dict(self):
        return {
            "goal": self.goal,
            "iterations": self.iterations,
            "seed": self.seed,
            "sample_fraction": self.sample_fraction,
            "redraws": self.redraws,
            "arms": {
                arm: {metric: list(values) for metric, values in by_metric.items()}
                for arm, by_metric in self.arms.items()
            },
            "tests": {
                metric: None if result is None else vars(result)
                for metric, result in self.tests.items()
            },
            "summary": self.summary_row(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            goal=data["goal"],
            iterations=data["iterations"],
            seed=data["seed"],
            sample_fraction=data["sample_fraction"],
            redraws=data.get("redraws", 0),
            arms={
                arm: {metric: tuple(values) for metric, values in by_metric.items()}
                for arm, by_metric in data["arms"].items()
            },
            tests={
                metric: None if result is None else WelchResult(**result)
                for metric, result in data["tests"].items()
            },
        )

    def save(self, path):
        return write_json(path, self.to_dict())


def _draw(rng, y, size, max_redraws, iteration):
    """In-bag indices with replacement whose out-of-bag rest holds both classes."""
    n = y.size
    for attempt in range(max_redraws):
        drawn = rng.integers(0, n, size=size)
        oob = np.setdiff1d(np.arange(n), drawn)
        in_bag = np.bincount(y[drawn], minlength=2)
        if np.unique(y[oob]).size == 2 and in_bag.min() >= 2:
            return drawn, oob, attempt
    raise RedrawExhaustedError(
        f"Bootstrap iteration {iteration} found no resample with both classes out of bag "
        f"after {max_redraws} attempts."
    )


def _iteration(index, seed, X, y, synthetic_X, synthetic_y, config, fraction, max_redraws):
    rng = np.random.default_rng([seed, index])
    drawn, oob, redraws = _draw(rng, y, int(round(fraction * y.size)), max_redraws, index)
    if redraws:
        logger.warning("Bootstrap iteration %d redrawn %d times", index, redraws)
    logger.debug("Bootstrap iteration %d draws %s", index, drawn[:LOGGED_DRAWS].tolist())

    extra = (
        rng.integers(0, synthetic_y.size, size=int(round(fraction * synthetic_y.size)))
        if synthetic_y.size
        else np.empty(0, dtype=np.int64)
    )
    child = replace(config, seed=int(rng.integers(2**31)))
    train_sets = {
        "original": (X[drawn], y[drawn]),
        "augmented": (
            np.vstack([X[drawn], synthetic_X[extra]]),
            np.concatenate([y[drawn], synthetic_y[extra]]),
        ),
    }
    scores = {}
    for arm, (train_X, train_y) in train_sets.items():
        model = fit(train_X, train_y, child)
        scores[arm] = metrics(model, X[oob], y[oob])
    return scores, redraws


def bootstrap_eval(
    original,
    augmented,
    embeddings,
    goal,
    config: ClassifierConfig,
    iterations=DEFAULT_ITERATIONS,
    seed=0,
    sample_fraction=DEFAULT_SAMPLE_FRACTION,
    max_redraws=DEFAULT_MAX_REDRAWS,
    workers=1,
) -> BootstrapReport:
    """
    Compare both arms over ``iterations`` paired resamples.

    Every iteration draws ``sample_fraction`` of the originally labeled
    documents with replacement; both arms train on that same draw, the
    augmented arm additionally on a resample of the synthetic documents.
    Out-of-bag originals are the test set, so synthetic labels are never
    tested on.
    """
    if iterations < 2:
        raise ConfigError(f"Bootstrap needs at least 2 iterations, got {iterations}.")
    if not 0 < sample_fraction <= 1:
        raise ConfigError(f"sample_fraction must lie in (0, 1], got {sample_fraction}.")
    if original.original_label_digest() != augmented.original_label_digest():
        raise DataError("The original and augmented corpora disagree on original labels.")

    universe = sorted(doc.id for doc in original.labeled(goal))
    synthetic = sorted(
        doc.id for doc in augmented if not doc.is_replica and doc.label(goal).is_synthetic
    )
    if set(universe) & set(synthetic):
        raise StageError("A document is both originally and synthetically labeled.", "evaluate", goal)

    X = embeddings.rows(universe)
    y = np.array([original.get(doc_id).original_value(goal) for doc_id in universe])
    synthetic_X = embeddings.rows(synthetic) if synthetic else np.empty((0, embeddings.dim))
    synthetic_y = np.array(
        [augmented.get(doc_id).label(goal).value for doc_id in synthetic], dtype=np.int64
    )
    logger.info(
        "Bootstrap %s: %d iterations over %d labeled and %d synthetic documents",
        goal,
        iterations,
        len(universe),
        len(synthetic),
    )

    results = Parallel(n_jobs=workers)(
        delayed(_iteration)(
            i, seed, X, y, synthetic_X, synthetic_y, config, sample_fraction, max_redraws
        )
        for i in range(iterations)
    )

    arms = {arm: {metric: [] for metric in METRICS} for arm in ARMS}
    redraws = 0
    for scores, redrawn in results:
        redraws += redrawn
        for arm in ARMS:
            accuracy, sensitivity = scores[arm]
            arms[arm]["accuracy"].append(accuracy)
            arms[arm]["sensitivity"].append(sensitivity)

    tests = {}
    for metric in METRICS:
        try:
            tests[metric] = welch_t_test(arms["augmented"][metric], arms["original"][metric])
        except DegenerateSamplesError as exc:
            logger.warning("No t-test for %s %s: %s", goal, metric, exc)
            tests[metric] = None

    report = BootstrapReport(
        goal=goal,
        iterations=iterations,
        seed=seed,
        sample_fraction=sample_fraction,
        arms={arm: {m: tuple(v) for m, v in by.items()} for arm, by in arms.items()},
        tests=tests,
        redraws=redraws,
    )
    row = report.summary_row()
    logger.info(
        "Bootstrap %s: accuracy %.3f -> %.3f, sensitivity %.3f -> %.3f",
        goal,
        row["orig_acc"],
        row["aug_acc"],
        row["orig_sens"],
        row["aug_sens"],
    )
    return report
