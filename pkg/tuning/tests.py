import csv
import random
import tempfile
from dataclasses import replace
from pathlib import Path

from django.test import SimpleTestCase, tag

from core.exceptions import ConfigError
from corpus.splits import EmptySplitError, Split, SplitAssignment, split_labeled
from embedding.backends import EmbeddingSettings, embed_corpus
from propagation.rules import PropagationParams
from synthgen.generator import SyntheticSpec, generate
from synthgen.presets import get_preset
from tuning.grid import (
    GRID_COLUMNS,
    GridExhaustedError,
    MaskedScore,
    ParamGrid,
    evaluate_masked,
    grid_search,
    score_assignments,
    select_best,
    test_confirm,
)


def small_setup(seed=0):
    spec = SyntheticSpec(
        docs_per_topic=(60, 60),
        private_vocab=40,
        shared_vocab=40,
        doc_length=(20, 30),
        labeled_fraction=0.5,
        separability=0.9,
        seed=seed,
    )
    corpus, _ = generate(spec)
    split = split_labeled(corpus, "g1", seed)
    embeddings = embed_corpus(corpus, EmbeddingSettings(projection_dim=32), seed=seed)
    return corpus, split, embeddings


class ParamGridTests(SimpleTestCase):
    def test_default_grid_has_sixty_combos(self):
        grid = ParamGrid()
        self.assertEqual(len(grid), 60)
        self.assertEqual(len(grid.combos()), 60)
        self.assertEqual(grid.combos()[0], PropagationParams(5, 5, 50))
        self.assertEqual(grid.combos()[-1], PropagationParams(100, 100, 70))

    def test_empty_list(self):
        with self.assertRaises(ConfigError):
            ParamGrid(clusters=())

    def test_invalid_value(self):
        with self.assertRaises(ConfigError):
            ParamGrid(thresholds=(50, 100))


class MaskedScoreTests(SimpleTestCase):
    params = PropagationParams(5, 10, 50)

    def test_confusion_arithmetic(self):
        truth = {"a": 1, "b": 1, "c": 0, "d": 0}
        score = score_assignments(self.params, {"a": 1, "b": 0, "c": 0}, truth)
        self.assertAlmostEqual(score.accuracy, 2 / 3)
        self.assertAlmostEqual(score.sensitivity, 1 / 2)
        self.assertAlmostEqual(score.coverage, 3 / 4)
        self.assertEqual((score.assigned, score.skipped), (3, 1))

    def test_perfect(self):
        truth = {"a": 1, "b": 0}
        score = score_assignments(self.params, {"a": 1, "b": 0}, truth)
        self.assertEqual((score.accuracy, score.sensitivity), (1.0, 1.0))

    def test_nothing_assigned_is_invalid(self):
        score = score_assignments(self.params, {}, {"a": 1})
        self.assertFalse(score.valid)
        self.assertEqual(score.coverage, 0.0)

    def test_assignments_outside_mask_ignored(self):
        score = score_assignments(self.params, {"a": 1, "u": 0}, {"a": 1})
        self.assertEqual(score.assigned, 1)


class SelectBestTests(SimpleTestCase):
    def score(self, k, radius, threshold, tp=1, tn=1, fp=0, fn=0, masked=4):
        return MaskedScore(
            PropagationParams(k, radius, threshold), tp=tp, tn=tn, fp=fp, fn=fn, masked=masked
        )

    def test_fewer_clusters_win_ties(self):
        best = select_best([self.score(50, 10, 60), self.score(25, 10, 60)], 0.25)
        self.assertEqual(best.params.clusters, 25)

    def test_full_tie_break_order(self):
        scores = [
            self.score(25, 25, 50),
            self.score(25, 10, 50),
            self.score(25, 10, 70),
            self.score(50, 5, 70),
        ]
        expected = PropagationParams(25, 10, 70)
        for attempt in range(10):
            random.Random(attempt).shuffle(scores)
            self.assertEqual(select_best(scores, 0.25).params, expected)

    def test_higher_score_wins(self):
        best = select_best(
            [self.score(5, 5, 50, tp=1, tn=0, fp=1), self.score(100, 100, 70)], 0.25
        )
        self.assertEqual(best.params.clusters, 100)

    def test_coverage_floor(self):
        low = self.score(5, 5, 50, masked=100)
        high = self.score(10, 5, 50, tp=20, tn=10, fp=10, masked=100)
        self.assertEqual(select_best([low, high], 0.25), high)

    def test_nothing_eligible(self):
        with self.assertRaises(GridExhaustedError):
            select_best([self.score(5, 5, 50, tp=0, tn=0)], 0.25)


class GridSearchTests(SimpleTestCase):
    grid = ParamGrid(clusters=(2, 4), radii=(25, 100), thresholds=(50, 70), min_coverage=0.0)

    def test_report(self):
        corpus, split, embeddings = small_setup()
        report = grid_search(corpus, split, embeddings, self.grid, "g1", seed=3)
        self.assertEqual(len(report.scores), 8)
        masked = len(split.ids(Split.VALIDATION))
        for score in report.scores:
            self.assertEqual(score.tp + score.tn + score.fp + score.fn, score.assigned)
            self.assertEqual(score.assigned + score.skipped, masked)
            for value in (score.accuracy, score.sensitivity, score.coverage):
                self.assertTrue(0.0 <= value <= 1.0)
        self.assertTrue(all(report.best.score >= s.score for s in report.scores if s.valid))

    def test_matches_single_evaluation(self):
        corpus, split, embeddings = small_setup()
        report = grid_search(corpus, split, embeddings, self.grid, "g1", seed=3)
        params = PropagationParams(4, 25, 70)
        single = evaluate_masked(corpus, split, embeddings, params, "g1", seed=3)
        [from_grid] = [s for s in report.scores if s.params == params]
        self.assertEqual(from_grid, single)

    def test_workers_do_not_change_results(self):
        corpus, split, embeddings = small_setup()
        one = grid_search(corpus, split, embeddings, self.grid, "g1", seed=3, workers=1)
        two = grid_search(corpus, split, embeddings, self.grid, "g1", seed=3, workers=2)
        self.assertEqual(one.scores, two.scores)

    def test_csv_and_best_record(self):
        corpus, split, embeddings = small_setup()
        report = grid_search(corpus, split, embeddings, self.grid, "g1", seed=3)
        report = replace(
            report,
            test=test_confirm(corpus, split, embeddings, report.best.params, "g1", seed=3),
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = report.write_csv(Path(tmp) / "grid.csv")
            with open(path, newline="") as handle:
                rows = list(csv.DictReader(handle))
        self.assertEqual(len(rows), 8)
        self.assertEqual(tuple(rows[0]), GRID_COLUMNS)
        record = report.best_record()
        for key in ("clusters", "distance", "threshold", "test_accuracy", "drift"):
            self.assertIn(key, record)

    def test_empty_test_split(self):
        corpus, split, embeddings = small_setup()
        no_test = SplitAssignment(
            goal="g1",
            seed=0,
            assignment={
                doc_id: value
                for doc_id, value in split.assignment.items()
                if value is not Split.TEST
            },
        )
        with self.assertRaises(EmptySplitError):
            test_confirm(corpus, no_test, embeddings, PropagationParams(2, 100, 50), "g1", 0)


@tag("slow")
class PlantedStructureTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.corpus, _ = generate(get_preset("sep2"))
        cls.split = split_labeled(cls.corpus, "g1", seed=0)
        cls.embeddings = embed_corpus(cls.corpus, EmbeddingSettings(), seed=0)
        cls.report = grid_search(cls.corpus, cls.split, cls.embeddings, ParamGrid(), "g1", seed=0)

    def test_sep2_recovery(self):
        self.assertEqual(len(self.report.scores), 60)
        self.assertGreaterEqual(self.report.best.accuracy, 0.9)
        test = test_confirm(
            self.corpus, self.split, self.embeddings, self.report.best.params, "g1", seed=0
        )
        self.assertLessEqual(abs(test.accuracy - self.report.best.accuracy), 0.1)

    def test_sep2_selects_smallest_covering_k(self):
        self.assertIn(self.report.best.params.clusters, (5, 10))
