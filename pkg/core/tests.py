import csv
import json
import tempfile
from dataclasses import replace
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from core.artifacts import read_json, read_matrix, write_matrix
from core.config import apply_override, build_config, load_config
from core.exceptions import ConfigError, DataError, MissingArtifactError
from core.models import PipelineRun, StageRun
from core.pipeline import STAGES, RunManifest, Workspace, run_pipeline
from core.seeds import derive_seed
from corpus.documents import Corpus, LabelState
from corpus.loaders import dump_corpus, load_corpus
from corpus.splits import InsufficientLabelsError
from synthgen.generator import SyntheticSpec, generate
from synthgen.presets import get_preset

REPORTS = ("summary.csv", "best_params.csv", "grid.csv", "boxplots.csv", "label_distribution.csv")


def small_corpus(seed=0, positive_topics=None):
    spec = SyntheticSpec(
        docs_per_topic=(40, 40),
        private_vocab=30,
        shared_vocab=30,
        doc_length=(15, 25),
        labeled_fraction=0.5,
        separability=0.9,
        positive_topics=positive_topics or {"g1": (1,)},
        seed=seed,
    )
    corpus, _ = generate(spec)
    return corpus


def config_data(corpus_path, output_dir, **sections):
    data = {
        "corpus": {"labeled": str(corpus_path)},
        "embedding": {"projection_dim": 16},
        "grid": {"clusters": [2, 4], "radii": [50, 100], "thresholds": [50], "min_coverage": 0.0},
        "classifier": {"hidden_sizes": [8], "dropout": [0.1], "epochs": 3, "batch_size": 16},
        "bootstrap": {"iterations": 3},
        "seed": 0,
        "output_dir": str(output_dir),
        "workers": 1,
    }
    data.update(sections)
    return data


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write_corpus(self, corpus=None, name="corpus.jsonl"):
        return dump_corpus(corpus or small_corpus(), self.tmp / name)

    def write_config(self, data, name="config.yaml"):
        # JSON is a subset of YAML
        path = self.tmp / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path


class ConfigTests(TempDirMixin, SimpleTestCase):
    def test_defaults(self):
        config = build_config({"corpus": {"labeled": "corpus.jsonl"}})
        self.assertIsNone(config.goals)
        self.assertEqual(len(config.grid), 60)
        self.assertEqual(config.classifier.dropout, (0.8, 0.6))
        self.assertEqual(config.embedding.backend, "tfidf")
        self.assertEqual(config.bootstrap.iterations, 200)
        self.assertEqual(config.upsample.target_positive_fraction, 0.20)

    def test_empty_goals_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config({"corpus": {"labeled": "c.jsonl"}, "goals": []})
        self.assertIn("goals", str(ctx.exception))

    def test_missing_corpus(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config({})
        self.assertIn("corpus", str(ctx.exception))

    def test_unknown_key_named(self):
        with self.assertRaises(ConfigError) as ctx:
            build_config({"corpus": {"labeled": "c.jsonl"}, "grid": {"cluster": [5]}})
        self.assertIn("grid.cluster", str(ctx.exception))

    def test_invalid_values(self):
        for section in (
            {"grid": {"clusters": [1, 5]}},
            {"grid": {"thresholds": [120]}},
            {"classifier": {"hidden_sizes": [8, 4], "dropout": [0.5]}},
            {"upsample": {"target_positive_fraction": 1.0}},
            {"bootstrap": {"iterations": 1}},
            {"embedding": {"backend": "bert"}},
        ):
            with self.subTest(section=section), self.assertRaises(ConfigError):
                build_config({"corpus": {"labeled": "c.jsonl"}, **section})

    def test_whole_percentages_stay_integers(self):
        config = build_config({"corpus": {"labeled": "c.jsonl"}, "grid": {"radii": [25.0, 12.5]}})
        self.assertEqual(config.grid.radii, (25, 12.5))
        self.assertIsInstance(config.grid.radii[0], int)

    def test_override_values_read_as_yaml(self):
        data = {}
        apply_override(data, "grid.clusters=[5, 10]")
        apply_override(data, "seed=3")
        apply_override(data, "embedding.backend=doc2vec")
        self.assertEqual(
            data, {"grid": {"clusters": [5, 10]}, "seed": 3, "embedding": {"backend": "doc2vec"}}
        )

    def test_malformed_override(self):
        with self.assertRaises(ConfigError):
            apply_override({}, "seed")
        with self.assertRaises(ConfigError):
            apply_override({"seed": 1}, "seed.value=2")

    def test_flags_win_over_file_and_overrides(self):
        path = self.write_config({"corpus": {"labeled": "c.jsonl"}, "seed": 1, "workers": 1})
        config = load_config(path, overrides=["seed=2", "workers=3"], seed=5)
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.workers, 3)

    def test_goals_flag(self):
        config = load_config(overrides=["corpus.labeled=c.jsonl"], goals=["g2", "g1"])
        self.assertEqual(config.goals, ("g2", "g1"))
        with self.assertRaises(ConfigError):
            load_config(overrides=["corpus.labeled=c.jsonl"], goals=["g1", "g1"])

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(self.tmp / "absent.yaml")

    def test_digest_ignores_workers_only(self):
        base = {"corpus": {"labeled": "c.jsonl"}, "workers": 1}
        one = build_config(base)
        self.assertEqual(one.digest, build_config({**base, "workers": 4}).digest)
        self.assertNotEqual(one.digest, build_config({**base, "seed": 1}).digest)


class SeedTests(SimpleTestCase):
    def test_stable_and_distinct(self):
        self.assertEqual(derive_seed(0, "tune", "g1"), derive_seed(0, "tune", "g1"))
        seeds = {
            derive_seed(master, stage, goal)
            for master in (0, 1)
            for stage in STAGES
            for goal in ("g1", "g2")
        }
        self.assertEqual(len(seeds), 2 * len(STAGES) * 2)
        self.assertTrue(all(0 <= seed < 2**32 for seed in seeds))


class ArtifactTests(TempDirMixin, SimpleTestCase):
    def test_missing_artifact_names_producer(self):
        with self.assertRaises(MissingArtifactError) as ctx:
            read_json(self.tmp / "best.json", "tune")
        self.assertIn("manage.py tune", str(ctx.exception))
        self.assertEqual(ctx.exception.exit_code, 3)

    def test_matrix_size_checked(self):
        path = write_matrix(self.tmp / "m.f32", [[1.0, 2.0], [3.0, 4.0]])
        self.assertEqual(read_matrix(path, 2, 2, "embed").tolist(), [[1.0, 2.0], [3.0, 4.0]])
        with self.assertRaises(DataError):
            read_matrix(path, 3, 2, "embed")


class CommandTests(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.out = self.tmp / "out"
        self.config = self.write_config(config_data(self.write_corpus(), self.out))

    def call(self, name, *args, **options):
        stdout = StringIO()
        call_command(name, *args, config=str(self.config), stdout=stdout, **options)
        return stdout.getvalue()

    def test_empty_goals_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("run", goals=[])
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertFalse(self.out.exists())
        self.assertFalse(PipelineRun.objects.exists())

    def test_missing_upstream_artifact(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("tune")
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn("manage.py embed", str(ctx.exception))

    def test_unknown_goal(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("tune", goal="g9")
        self.assertEqual(ctx.exception.returncode, 3)

    def test_generate(self):
        target = self.tmp / "generated"
        stdout = StringIO()
        call_command(
            "generate",
            preset="sep2",
            out=str(target),
            overrides=["docs_per_topic=[30, 30]"],
            stdout=stdout,
        )
        corpus = load_corpus(target / "corpus.jsonl")
        self.assertEqual(len(corpus), 60)
        self.assertTrue((target / "truth.json").exists())
        self.assertIn("g1: 60 documents", stdout.getvalue())

    def test_generate_bad_override(self):
        with self.assertRaises(CommandError) as ctx:
            call_command("generate", out=str(self.tmp / "g"), overrides=["colour=1"])
        self.assertEqual(ctx.exception.returncode, 2)

    def test_subcommands_chain(self):
        workspace = Workspace(load_config(self.config))
        self.call("embed")
        self.assertTrue((workspace.embeddings_dir / "meta.json").exists())

        self.call("tune", goal="g1")
        with open(workspace.grid_path("g1"), newline="") as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 4)

        output = self.call("cluster", goal="g1", k=3)
        self.assertIn("K=3", output)
        self.assertTrue((workspace.clusters_dir("g1", 3) / "assignments.csv").exists())

        self.call("augment", goal="g1", params="2,100,50")
        report = read_json(workspace.augmentation_path("g1"), "augment")
        self.assertEqual(report["params"]["clusters"], 2)
        self.assertEqual(
            report["totals"]["synthetic_1"] + report["totals"]["synthetic_0"],
            sum(c["assigned"] for c in report["clusters"]),
        )

        self.call("train")
        self.assertTrue((workspace.classifier_dir("g1", "augmented") / "weights.pt").exists())
        self.call("evaluate")
        self.call("report")
        with open(workspace.reports_dir / "summary.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual([row["goal"] for row in rows], ["g1"])

    def test_augment_rejects_bad_params(self):
        with self.assertRaises(CommandError) as ctx:
            self.call("augment", params="2,100")
        self.assertEqual(ctx.exception.returncode, 2)

    def test_report_history(self):
        PipelineRun.objects.create(config_digest="a" * 64, output_dir="/runs/x", goals=["g1"])
        stdout = StringIO()
        call_command("report", history=True, stdout=stdout)
        self.assertIn("running aaaaaaaaaaaa /runs/x goals=g1 stages=0", stdout.getvalue())


class PipelineTests(TempDirMixin, TestCase):
    def setUp(self):
        super().setUp()
        self.corpus_path = self.write_corpus()

    def config(self, output="out", **sections):
        return build_config(config_data(self.corpus_path, self.tmp / output, **sections))

    def report_bytes(self, config):
        directory = Workspace(config).reports_dir
        return {name: (directory / name).read_bytes() for name in REPORTS}

    def test_run_writes_manifest_and_reports(self):
        config = self.config()
        manifest = run_pipeline(config)
        workspace = Workspace(config)

        self.assertEqual(manifest.status, "completed")
        self.assertEqual(set(manifest.stages), {"embed"} | {f"g1/{s}" for s in STAGES[1:]})
        best = manifest.goals["g1"]["best"]
        for key in ("clusters", "distance", "threshold", "accuracy", "sensitivity", "drift"):
            self.assertIn(key, best)
        self.assertEqual(manifest.seeds["g1/tune"], derive_seed(0, "tune", "g1"))
        manifest.verify(workspace.root)
        self.assertEqual(RunManifest.load(workspace.manifest_path).to_dict(), manifest.to_dict())

        with open(workspace.reports_dir / "label_distribution.csv", newline="") as handle:
            before, after = list(csv.DictReader(handle))
        self.assertEqual((before["stage"], after["stage"]), ("before", "after"))
        for key in ("orig_0", "orig_1"):
            self.assertEqual(before[key], after[key])
        for row in (before, after):
            self.assertEqual(
                int(row["total_1"]), int(row["orig_1"]) + int(row["synthetic_1"])
            )

        run = PipelineRun.objects.get()
        self.assertEqual(run.status, "completed")
        self.assertEqual(run.stages.count(), len(STAGES))

    def test_rerun_skips_every_stage(self):
        config = self.config()
        first = run_pipeline(config)
        reports = self.report_bytes(config)
        second = run_pipeline(config)

        self.assertTrue(all(s["status"] == "cached" for s in second.stages.values()))
        self.assertEqual(second.goals, first.goals)
        self.assertEqual(self.report_bytes(config), reports)
        self.assertEqual(PipelineRun.objects.filter(is_active=True).count(), 1)
        self.assertEqual(StageRun.objects.filter(status="cached").count(), len(STAGES))

    def test_changed_classifier_reruns_downstream_only(self):
        run_pipeline(self.config())
        changed = config_data(self.corpus_path, self.tmp / "out")
        changed["classifier"]["epochs"] = 4
        manifest = run_pipeline(build_config(changed))
        statuses = {name: stage["status"] for name, stage in manifest.stages.items()}
        for name in ("embed", "g1/split", "g1/upsample", "g1/tune", "g1/augment"):
            self.assertEqual(statuses[name], "cached")
        for name in ("g1/train", "g1/evaluate"):
            self.assertEqual(statuses[name], "completed")

    def test_deleted_artifact_is_rebuilt(self):
        config = self.config()
        run_pipeline(config)
        Workspace(config).grid_path("g1").unlink()
        manifest = run_pipeline(config)
        self.assertEqual(manifest.stages["g1/tune"]["status"], "completed")
        self.assertEqual(manifest.stages["g1/split"]["status"], "cached")
        manifest.verify(Workspace(config).root)

    def test_verify_detects_changed_report(self):
        config = self.config()
        manifest = run_pipeline(config)
        path = Workspace(config).reports_dir / "summary.csv"
        path.write_text(path.read_text() + "tampered\n")
        with self.assertRaises(DataError):
            manifest.verify(Workspace(config).root)

    def test_identical_runs_give_identical_reports(self):
        run_pipeline(self.config("a"))
        run_pipeline(self.config("b"))
        self.assertEqual(self.report_bytes(self.config("a")), self.report_bytes(self.config("b")))

    def test_failing_goal_is_recorded(self):
        documents = []
        for index, doc in enumerate(small_corpus()):
            labels = dict(doc.labels)
            if index < 3:
                labels["g2"] = LabelState(index % 2)
            documents.append(replace(doc, labels=labels))
        self.corpus_path = self.write_corpus(Corpus(documents=documents, goals=("g1", "g2")))
        config = self.config()

        with self.assertRaises(InsufficientLabelsError):
            run_pipeline(config)

        manifest = RunManifest.load(Workspace(config).manifest_path)
        self.assertEqual(manifest.status, "failed")
        self.assertEqual(manifest.failure["goal"], "g2")
        self.assertEqual(manifest.failure["stage"], "split")
        self.assertEqual(manifest.goals["g1"]["status"], "completed")
        self.assertEqual(manifest.goals["g2"]["status"], "failed")
        manifest.verify(Workspace(config).root)

        run = PipelineRun.objects.get()
        self.assertEqual((run.status, run.failed_goal, run.failed_stage), ("failed", "g2", "split"))

    def test_workers_do_not_change_reports(self):
        run_pipeline(self.config("one"))
        run_pipeline(self.config("two", workers=2))
        self.assertEqual(
            self.report_bytes(self.config("one")), self.report_bytes(self.config("two"))
        )

    def test_concurrent_goals_match_sequential_run(self):
        corpus = small_corpus(positive_topics={"g1": (1,), "g2": (0,)})
        self.corpus_path = self.write_corpus(corpus)
        sequential = run_pipeline(self.config("one"))
        threaded = run_pipeline(self.config("two", workers=2))
        self.assertEqual(set(threaded.goals), {"g1", "g2"})
        self.assertEqual(threaded.goals, sequential.goals)
        self.assertEqual(
            self.report_bytes(self.config("one")), self.report_bytes(self.config("two"))
        )
        for goal in ("g1", "g2"):
            one = Workspace(self.config("one")).bootstrap_path(goal).read_bytes()
            two = Workspace(self.config("two")).bootstrap_path(goal).read_bytes()
            self.assertEqual(one, two)


@tag("slow")
class PresetRunTests(TempDirMixin, TestCase):
    def test_sep2_end_to_end(self):
        corpus, _ = generate(get_preset("sep2"))
        path = self.write_corpus(corpus)
        config = build_config(
            {
                "corpus": {"labeled": str(path)},
                "bootstrap": {"iterations": 20},
                "output_dir": str(self.tmp / "out"),
            }
        )
        manifest = run_pipeline(config)
        self.assertEqual(manifest.status, "completed")
        self.assertIn("best", manifest.goals["g1"])

        reports = Workspace(config).reports_dir
        with open(reports / "grid.csv", newline="") as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 60)
        with open(reports / "summary.csv", newline="") as handle:
            [row] = list(csv.DictReader(handle))
        self.assertEqual(row["goal"], "g1")
        for key in ("orig_acc", "orig_sens", "aug_acc", "aug_sens", "p_acc", "p_sens"):
            self.assertIn(key, row)
