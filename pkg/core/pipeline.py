"""
Orchestration of the whole augmentation run.

``Workspace`` knows where every artifact of one output directory lives and
wraps each module operation with the file I/O around it; the management
commands call it one stage at a time. ``run_pipeline`` chains the stages,
skips those whose inputs and outputs are unchanged since the last run, and
writes ``v1/manifest.json``.

Every stage reads its inputs back from disk, so a resumed run sees exactly
the bytes a fresh run would.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from pathlib import Path

from django.conf import settings
from joblib import Parallel, delayed

from classifier.bootstrap import ARMS, BootstrapReport, bootstrap_eval
from classifier.network import train
from clustering.kmeans import kmeans_fit
from core.artifacts import (
    FORMAT_VERSION,
    LAYOUT_VERSION,
    artifact_digest,
    data_digest,
    file_digest,
    read_json,
    write_json,
)
from core.config import PipelineConfig
from core.exceptions import DataError, MissingArtifactError, PipelineError, StageError
from core.models import PipelineRun, StageRun
from core.seeds import derive_seed
from corpus.loaders import dump_corpus, load_corpus
from corpus.splits import SplitAssignment, split_labeled
from corpus.upsampling import upsample
from embedding.backends import embed_corpus, embed_with_model
from embedding.doc2vec import BACKEND as DOC2VEC
from embedding.matrix import EmbeddingMatrix
from propagation.augmentation import augment, clustering_input
from propagation.rules import PropagationParams
from tuning.grid import grid_search, test_confirm

logger = logging.getLogger(__name__)

GOAL_STAGES = ("split", "upsample", "tune", "augment", "train", "evaluate")
STAGES = ("embed",) + GOAL_STAGES


class Workspace:
    def __init__(self, config: PipelineConfig, workers=None):
        self.config = config
        self.root = config.root
        self.workers = workers or config.workers

    # artifact paths

    @property
    def embeddings_dir(self):
        return self.root / "embeddings"

    @property
    def doc2vec_dir(self):
        return self.root / "doc2vec"

    @property
    def reports_dir(self):
        return self.root / "reports"

    @property
    def manifest_path(self):
        return self.root / "manifest.json"

    def goal_dir(self, goal):
        return self.root / "goals" / goal

    def split_path(self, goal):
        return self.goal_dir(goal) / "split.json"

    def upsampled_path(self, goal):
        return self.goal_dir(goal) / "corpus_upsampled.jsonl"

    def grid_path(self, goal):
        return self.goal_dir(goal) / "grid.csv"

    def best_path(self, goal):
        return self.goal_dir(goal) / "best.json"

    def clusters_dir(self, goal, k):
        return self.goal_dir(goal) / "clusters" / f"k{k}"

    def augmentation_path(self, goal):
        return self.goal_dir(goal) / "augmentation.json"

    def augmented_path(self, goal):
        return self.goal_dir(goal) / "corpus_augmented.jsonl"

    def classifier_dir(self, goal, arm):
        return self.goal_dir(goal) / "classifier" / arm

    def bootstrap_path(self, goal):
        return self.goal_dir(goal) / "bootstrap.json"

    def relative(self, path):
        return Path(path).relative_to(self.root).as_posix()

    def artifacts(self, stage, goal=""):
        """Paths a completed ``stage`` leaves behind."""
        if stage == "embed":
            paths = [self.embeddings_dir]
            if self.config.embedding.backend == DOC2VEC:
                paths.append(self.doc2vec_dir)
            return paths
        return {
            "split": lambda: [self.split_path(goal)],
            "upsample": lambda: [self.upsampled_path(goal)],
            "tune": lambda: [self.grid_path(goal), self.best_path(goal)],
            "augment": lambda: [
                self.augmentation_path(goal),
                self.augmented_path(goal),
                self.clusters_dir(goal, self.best_params(goal).clusters),
            ],
            "train": lambda: [self.classifier_dir(goal, arm) for arm in ARMS],
            "evaluate": lambda: [self.bootstrap_path(goal)],
        }[stage]()

    def seed(self, stage, goal=""):
        return derive_seed(self.config.seed, stage, goal)

    # inputs

    @cached_property
    def corpus(self):
        paths = self.config.corpus.paths()
        for path in paths:
            if not path.exists():
                raise DataError(f"Corpus file {path} does not exist.")
        return load_corpus(paths[0], extra_paths=paths[1:])

    @cached_property
    def goals(self):
        if self.config.goals is None:
            return self.corpus.goals
        for goal in self.config.goals:
            self.corpus.check_goal(goal)
        return self.config.goals

    def input_digests(self):
        return {str(path): file_digest(path) for path in self.config.corpus.paths()}

    def embeddings(self):
        return EmbeddingMatrix.load(self.embeddings_dir)

    def load_split(self, goal):
        return SplitAssignment.load(self.split_path(goal))

    def upsampled(self, goal):
        path = self.upsampled_path(goal)
        if not path.exists():
            raise MissingArtifactError(path, "tune")
        return load_corpus(path)

    def augmented(self, goal):
        path = self.augmented_path(goal)
        if not path.exists():
            raise MissingArtifactError(path, "augment")
        return load_corpus(path)

    def best_params(self, goal):
        record = read_json(self.best_path(goal), "tune")
        return PropagationParams(record["clusters"], record["distance"], record["threshold"])

    # stages

    def embed(self, model_dir=None):
        seed = self.seed("embed")
        if model_dir is not None:
            matrix = embed_with_model(self.corpus, model_dir, seed)
        else:
            target = self.doc2vec_dir if self.config.embedding.backend == DOC2VEC else None
            matrix = embed_corpus(self.corpus, self.config.embedding, seed, model_dir=target)
        matrix.save(self.embeddings_dir)
        logger.info("Embedded %d documents as %s", len(matrix.ids), matrix.tag)
        return matrix

    def split(self, goal):
        assignment = split_labeled(self.corpus, goal, self.seed("split", goal))
        assignment.save(self.split_path(goal))
        return assignment

    def upsample(self, goal):
        options = self.config.upsample
        corpus = self.corpus
        if options.enabled:
            corpus = upsample(
                corpus,
                goal,
                self.load_split(goal),
                options.target_positive_fraction,
                options.max_replicas,
            )
        dump_corpus(corpus, self.upsampled_path(goal))
        return corpus

    def tune(self, goal):
        corpus, split = self.upsampled(goal), self.load_split(goal)
        embeddings = self.embeddings()
        seed = self.seed("tune", goal)
        report = grid_search(
            corpus, split, embeddings, self.config.grid, goal, seed, workers=self.workers
        )
        report = replace(
            report, test=test_confirm(corpus, split, embeddings, report.best.params, goal, seed)
        )
        report.write_csv(self.grid_path(goal))
        report.write_best(self.best_path(goal))
        return report

    def cluster(self, goal, k=None):
        """The k-means model augmentation fits for ``goal``, saved for inspection."""
        k = k or self.best_params(goal).clusters
        inputs = clustering_input(
            self.upsampled(goal),
            self.embeddings(),
            goal,
            excluded=self.load_split(goal).held_out(),
        )
        model = kmeans_fit(inputs.matrix, k, self.seed("augment", goal))
        model.save(self.clusters_dir(goal, k))
        return model

    def augment(self, goal, params=None):
        params = params or self.best_params(goal)
        result = augment(
            self.upsampled(goal),
            self.embeddings(),
            params,
            goal,
            self.seed("augment", goal),
            split=self.load_split(goal),
        )
        result.report.save(self.augmentation_path(goal))
        dump_corpus(result.corpus, self.augmented_path(goal))
        result.model.save(self.clusters_dir(goal, params.clusters))
        return result

    def training_labels(self, goal):
        """Per arm, the labels a final classifier learns from; replicas never count."""
        augmented = self.augmented(goal)
        documents = [doc for doc in augmented if not doc.is_replica]
        return {
            "original": {
                doc.id: doc.original_value(goal)
                for doc in documents
                if doc.label(goal).is_original
            },
            "augmented": {
                doc.id: doc.label(goal).value for doc in documents if doc.label(goal).is_labeled
            },
        }

    def train(self, goal):
        embeddings = self.embeddings()
        config = replace(self.config.classifier, seed=self.seed("train", goal))
        models = {}
        for arm, labels in self.training_labels(goal).items():
            models[arm] = train(embeddings, labels, config)
            models[arm].save(self.classifier_dir(goal, arm))
        return models

    def evaluate(self, goal):
        options = self.config.bootstrap
        report = bootstrap_eval(
            self.upsampled(goal),
            self.augmented(goal),
            self.embeddings(),
            goal,
            self.config.classifier,
            iterations=options.iterations,
            seed=self.seed("evaluate", goal),
            sample_fraction=options.sample_fraction,
            max_redraws=options.max_redraws,
            workers=self.workers,
        )
        report.save(self.bootstrap_path(goal))
        return report

    def bootstrap_report(self, goal):
        return BootstrapReport.from_dict(read_json(self.bootstrap_path(goal), "evaluate"))


@dataclass
class StageRecord:
    stage: str
    goal: str
    key: str
    seed: int = None
    status: str = "completed"
    artifacts: dict = field(default_factory=dict)
    error: str = ""

    @property
    def name(self):
        return f"{self.goal}/{self.stage}" if self.goal else self.stage

    def to_dict(self):
        return {
            "stage": self.stage,
            "goal": self.goal,
            "key": self.key,
            "seed": self.seed,
            "status": self.status,
            "artifacts": dict(self.artifacts),
            "error": self.error,
        }


class StageRunner:
    """
    Runs stages in order for one goal (or for the shared embed stage) and
    records them. A stage is skipped when the previous manifest holds a
    completed record with the same cache key whose artifacts are unchanged
    on disk.
    """

    def __init__(self, workspace, previous, force=False):
        self.workspace = workspace
        self.previous = previous
        self.force = force
        self.records = []

    def cached(self, name, key):
        record = self.previous.get(name)
        if self.force or not record or record["key"] != key:
            return None
        if record["status"] not in ("completed", "cached"):
            return None
        for relative, digest in record["artifacts"].items():
            path = self.workspace.root / relative
            if not path.exists() or artifact_digest(path) != digest:
                return None
        return record

    def run(self, stage, goal, key, produce):
        seed = self.workspace.seed(stage, goal)
        record = StageRecord(stage=stage, goal=goal, key=key, seed=seed)
        hit = self.cached(record.name, key)
        if hit is not None:
            logger.info("Stage %s is up to date, skipped", record.name)
            record.status = "cached"
            record.artifacts = dict(hit["artifacts"])
            self.records.append(record)
            return record

        logger.info("Stage %s started (seed %d)", record.name, seed)
        try:
            produce()
        except Exception as exc:
            record.status = "failed"
            record.error = str(exc)
            self.records.append(record)
            if isinstance(exc, PipelineError):
                raise
            raise StageError(f"Stage {record.name} failed: {exc}", stage, goal) from exc
        record.artifacts = {
            self.workspace.relative(path): artifact_digest(path)
            for path in self.workspace.artifacts(stage, goal)
        }
        self.records.append(record)
        logger.info("Stage %s finished", record.name)
        return record


def stage_key(stage, after, **params):
    return data_digest({"stage": stage, "after": after, **params})


def embed_key(workspace):
    return stage_key(
        "embed",
        workspace.input_digests(),
        embedding=asdict(workspace.config.embedding),
        seed=workspace.seed("embed"),
    )


def goal_keys(workspace, goal, embedded):
    """Cache key per goal stage; each key folds in the key of its inputs."""
    config = workspace.config
    keys = {}
    keys["split"] = stage_key(
        "split", workspace.input_digests(), goal=goal, seed=workspace.seed("split", goal)
    )
    keys["upsample"] = stage_key("upsample", keys["split"], upsample=asdict(config.upsample))
    keys["tune"] = stage_key(
        "tune",
        [keys["upsample"], embedded],
        grid=asdict(config.grid),
        seed=workspace.seed("tune", goal),
    )
    keys["augment"] = stage_key("augment", keys["tune"], seed=workspace.seed("augment", goal))
    keys["train"] = stage_key(
        "train",
        keys["augment"],
        classifier=asdict(config.classifier),
        seed=workspace.seed("train", goal),
    )
    keys["evaluate"] = stage_key(
        "evaluate",
        keys["augment"],
        classifier=asdict(config.classifier),
        bootstrap=asdict(config.bootstrap),
        seed=workspace.seed("evaluate", goal),
    )
    return keys


@dataclass
class GoalOutcome:
    goal: str
    records: list
    error: Exception = None

    @property
    def failed_stage(self):
        failed = [r for r in self.records if r.status == "failed"]
        return failed[-1].stage if failed else None


def run_goal(workspace, previous, goal, embedded, force) -> GoalOutcome:
    runner = StageRunner(workspace, previous, force)
    keys = goal_keys(workspace, goal, embedded)
    try:
        for stage in GOAL_STAGES:
            runner.run(stage, goal, keys[stage], lambda stage=stage: getattr(workspace, stage)(goal))
    except PipelineError as exc:
        logger.error("Goal %s stopped: %s", goal, exc)
        return GoalOutcome(goal=goal, records=runner.records, error=exc)
    return GoalOutcome(goal=goal, records=runner.records)


@dataclass
class RunManifest:
    config_digest: str
    config: dict
    inputs: dict
    stages: dict
    goals: dict
    reports: dict = field(default_factory=dict)
    status: str = "completed"
    failure: dict = None
    tool_version: str = settings.CLUSTER_AUGMENT_VERSION

    @property
    def seeds(self):
        return {name: record["seed"] for name, record in self.stages.items()}

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "layout": LAYOUT_VERSION,
            "tool_version": self.tool_version,
            "config_digest": self.config_digest,
            "config": self.config,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "stages": self.stages,
            "goals": self.goals,
            "reports": self.reports,
            "status": self.status,
            "failure": self.failure,
        }

    def save(self, path):
        return write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        data = read_json(path, "run")
        return cls(
            config_digest=data["config_digest"],
            config=data["config"],
            inputs=data["inputs"],
            stages=data["stages"],
            goals=data["goals"],
            reports=data.get("reports", {}),
            status=data["status"],
            failure=data.get("failure"),
            tool_version=data["tool_version"],
        )

    def artifact_digests(self):
        digests = {}
        for record in self.stages.values():
            digests.update(record["artifacts"])
        digests.update(self.reports)
        return digests

    def verify(self, root):
        """Every referenced artifact exists and still has its recorded digest."""
        root = Path(root)
        problems = []
        for relative, digest in sorted(self.artifact_digests().items()):
            path = root / relative
            if not path.exists():
                problems.append(f"{relative} is missing")
            elif artifact_digest(path) != digest:
                problems.append(f"{relative} changed since the run")
        if problems:
            raise DataError("Manifest check failed: " + "; ".join(problems))


def previous_stages(workspace):
    if not workspace.manifest_path.exists():
        return {}
    try:
        return RunManifest.load(workspace.manifest_path).stages
    except (KeyError, ValueError) as exc:
        logger.warning("Ignoring unreadable manifest %s: %s", workspace.manifest_path, exc)
        return {}


def goal_summary(workspace, outcome):
    if outcome.error is not None:
        return {"status": "failed", "stage": outcome.failed_stage, "cause": str(outcome.error)}
    return {
        "status": "completed",
        "best": read_json(workspace.best_path(outcome.goal), "tune"),
        "summary": workspace.bootstrap_report(outcome.goal).summary_row(),
    }


def record_stages(run, records):
    StageRun.objects.bulk_create(
        [
            StageRun(
                run=run,
                goal=record.goal,
                stage=record.stage,
                status=record.status,
                cache_key=record.key,
                seed=record.seed,
                artifacts=record.artifacts,
                error=record.error,
            )
            for record in records
        ]
    )


def write_manifest(workspace, records, outcomes=(), reports=(), failure=None):
    config = workspace.config
    manifest = RunManifest(
        config_digest=config.digest,
        config=config.to_dict(),
        inputs={
            str(path): file_digest(path) for path in config.corpus.paths() if path.exists()
        },
        stages={record.name: record.to_dict() for record in records},
        goals={outcome.goal: goal_summary(workspace, outcome) for outcome in outcomes},
        reports={workspace.relative(path): artifact_digest(path) for path in reports},
        status="failed" if failure else "completed",
        failure=failure,
    )
    manifest.save(workspace.manifest_path)
    return manifest


def run_pipeline(config: PipelineConfig, force=False) -> RunManifest:
    """
    Embed once, then run split, upsample, tune, augment, train and evaluate
    for every goal (goals side by side on up to ``config.workers`` threads),
    render the reports and write the manifest.

    A failing goal does not stop the others; the manifest then records the
    failing stage and cause and the first failure is raised once everything
    has been written.
    """
    from core.statistics.reports import render_reports

    workspace = Workspace(config)
    run = PipelineRun.objects.create(
        config_digest=config.digest,
        output_dir=str(config.output_dir),
        seed=config.seed,
        goals=list(config.goals or []),
    )
    PipelineRun.objects.filter(output_dir=run.output_dir).exclude(pk=run.pk).update(
        is_active=False
    )
    logger.info("Run %d started in %s", run.pk, workspace.root)

    previous = previous_stages(workspace)
    shared = StageRunner(workspace, previous, force)
    try:
        goals = workspace.goals
        embedded = embed_key(workspace)
        shared.run("embed", "", embedded, workspace.embed)
    except PipelineError as exc:
        write_manifest(
            workspace, shared.records, failure={"goal": "", "stage": "embed", "cause": str(exc)}
        )
        record_stages(run, shared.records)
        run.mark_failed("embed", "", exc)
        raise

    run.goals = list(goals)
    run.save()

    # goals share the worker budget
    goal_jobs = max(1, min(workspace.workers, len(goals)))
    workspace.workers = max(1, workspace.workers // goal_jobs)
    outcomes = Parallel(n_jobs=goal_jobs, backend="threading")(
        delayed(run_goal)(workspace, previous, goal, embedded, force) for goal in goals
    )

    records = shared.records + [r for outcome in outcomes for r in outcome.records]
    failures = [outcome for outcome in outcomes if outcome.error is not None]
    reports = render_reports(workspace, [o.goal for o in outcomes if o.error is None])
    failure = None
    if failures:
        first = failures[0]
        failure = {"goal": first.goal, "stage": first.failed_stage, "cause": str(first.error)}
    manifest = write_manifest(workspace, records, outcomes, reports, failure)

    record_stages(run, records)
    run.manifest_path = str(workspace.manifest_path)
    if failures:
        run.mark_failed(failure["stage"], failure["goal"], failures[0].error)
        raise failures[0].error
    run.status = "completed"
    run.save()
    logger.info(
        "Run %d completed: %d stages, %d skipped",
        run.pk,
        len(records),
        sum(1 for record in records if record.status == "cached"),
    )
    return manifest
