"""
Report CSVs rendered from the artifacts a run left behind; nothing here
reads the raw corpus inputs.
"""
import csv
import logging
from pathlib import Path

from django.db.models import Count

from classifier.bootstrap import BootstrapReport
from core.artifacts import read_json
from core.models import PipelineRun
from core.serializers import PipelineRunSerializer
from tuning.grid import GRID_COLUMNS

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("goal", "orig_acc", "orig_sens", "aug_acc", "aug_sens", "p_acc", "p_sens")
BEST_COLUMNS = (
    "goal",
    "clusters",
    "distance",
    "threshold",
    "accuracy",
    "sensitivity",
    "coverage",
    "test_accuracy",
    "test_sensitivity",
    "test_coverage",
    "drift",
)
BOXPLOT_COLUMNS = ("goal", "arm", "metric", "min", "q1", "median", "q3", "max", "mean")
DISTRIBUTION_COLUMNS = (
    "goal",
    "stage",
    "orig_0",
    "orig_1",
    "synthetic_0",
    "synthetic_1",
    "total_0",
    "total_1",
    "unlabeled",
)
PRECISION = 6


def _rounded(row):
    return {
        key: round(value, PRECISION) if isinstance(value, float) else value
        for key, value in row.items()
    }


def write_rows(path, columns, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(_rounded(row) for row in rows)
    return path


def distribution_row(tally, stage):
    return {
        "goal": tally.goal,
        "stage": stage,
        "orig_0": tally.original_0,
        "orig_1": tally.original_1,
        "synthetic_0": tally.synthetic_0,
        "synthetic_1": tally.synthetic_1,
        "total_0": tally.total_0,
        "total_1": tally.total_1,
        "unlabeled": tally.unlabeled,
    }


def grid_rows(workspace, goal):
    with open(workspace.grid_path(goal), newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def render_reports(workspace, goals):
    """
    Write the run's report CSVs for ``goals`` (in the given order) and
    return their paths:

    - ``summary.csv``: per goal both arms' bootstrap means and Welch p-values
    - ``best_params.csv``: selected parameters with validation and test scores
    - ``grid.csv``: every grid combination of every goal
    - ``boxplots.csv``: per goal, arm and metric the bootstrap quantiles
    - ``label_distribution.csv``: label counts before and after augmentation
    """
    summary, best, grid, boxplots, distribution = [], [], [], [], []
    for goal in goals:
        report = BootstrapReport.from_dict(read_json(workspace.bootstrap_path(goal), "evaluate"))
        summary.append(report.summary_row())
        boxplots += report.boxplot_rows()
        best.append(read_json(workspace.best_path(goal), "tune"))
        grid += grid_rows(workspace, goal)

        before = workspace.upsampled(goal).label_tally(goal)
        after = workspace.augmented(goal).label_tally(goal)
        distribution += [distribution_row(before, "before"), distribution_row(after, "after")]

    directory = workspace.reports_dir
    paths = [
        write_rows(directory / "summary.csv", SUMMARY_COLUMNS, summary),
        write_rows(directory / "best_params.csv", BEST_COLUMNS, best),
        write_rows(directory / "grid.csv", GRID_COLUMNS, grid),
        write_rows(directory / "boxplots.csv", BOXPLOT_COLUMNS, boxplots),
        write_rows(directory / "label_distribution.csv", DISTRIBUTION_COLUMNS, distribution),
    ]
    logger.info("Wrote %d reports for %d goals to %s", len(paths), len(goals), directory)
    return paths


def run_history(include_inactive=False):
    runs = PipelineRun.objects.annotate(stage_count=Count("stages"))
    if not include_inactive:
        runs = runs.filter(is_active=True)
    return PipelineRunSerializer(runs, many=True).data
