import json
import random
import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from corpus.cleaning import clean_text
from corpus.documents import (
    Corpus,
    Document,
    DuplicateDocumentError,
    LabelConflictError,
    LabelState,
    Provenance,
    UnknownGoalError,
)
from corpus.loaders import CorpusFormatError, dump_corpus, load_corpus
from corpus.splits import InsufficientLabelsError, Split, SplitAssignment, split_labeled
from corpus.upsampling import NothingToUpsampleError, upsample


def make_doc(doc_id, text="lorem ipsum", **labels):
    return Document(
        id=doc_id,
        raw_text=text,
        clean_text=clean_text(text),
        labels={goal: LabelState(value) for goal, value in labels.items()},
    )


def make_corpus(n_positive, n_negative, n_unlabeled=0, goal="g"):
    docs = [make_doc(f"p{i:04d}", **{goal: 1}) for i in range(n_positive)]
    docs += [make_doc(f"n{i:04d}", **{goal: 0}) for i in range(n_negative)]
    docs += [make_doc(f"u{i:04d}") for i in range(n_unlabeled)]
    return Corpus(documents=docs, goals=[goal])


class TempDirMixin:
    def setUp(self):
        super().setUp()
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()
        super().tearDown()

    def write_lines(self, name, records):
        path = self.tmp / name
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(record if isinstance(record, str) else json.dumps(record))
                handle.write("\n")
        return path


class CleanTextTests(SimpleTestCase):
    def test_letters_kept_digits_and_punctuation_dropped(self):
        self.assertEqual(clean_text("Ação  Nº 123!"), "ação nº")

    def test_empty(self):
        self.assertEqual(clean_text(""), "")

    def test_whitespace_collapsed(self):
        self.assertEqual(clean_text("  Hello,\tWORLD\n\n again "), "hello world again")

    def test_idempotent(self):
        rng = random.Random(11)
        alphabet = "abcXYZ çãéÉÕü ñº 0123456789 .,;:!?-_()[]\"' \t\n"
        for _ in range(1000):
            text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            once = clean_text(text)
            self.assertEqual(clean_text(once), once)


class DocumentTests(SimpleTestCase):
    def test_unlabeled_cannot_be_synthetic(self):
        with self.assertRaises(ValueError):
            LabelState(None, Provenance.SYNTHETIC)

    def test_synthetic_only_on_unlabeled(self):
        doc = make_doc("a", g=1)
        with self.assertRaises(LabelConflictError):
            doc.with_synthetic("g", 0)
        fresh = make_doc("b").with_synthetic("g", 1)
        self.assertTrue(fresh.label("g").is_synthetic)
        self.assertEqual(fresh.label("g").value, 1)

    def test_corpus_rejects_duplicates_and_unknown_goals(self):
        with self.assertRaises(DuplicateDocumentError):
            Corpus(documents=[make_doc("a"), make_doc("a")], goals=["g"])
        with self.assertRaises(UnknownGoalError):
            Corpus(documents=[make_doc("a", other=1)], goals=["g"])

    def test_label_tally(self):
        corpus = make_corpus(3, 5, 4)
        doc = corpus.get("u0000").with_synthetic("g", 1)
        corpus = corpus.with_documents(
            [doc if d.id == "u0000" else d for d in corpus.documents]
        )
        tally = corpus.label_tally("g")
        self.assertEqual(
            (tally.original_0, tally.original_1, tally.synthetic_1, tally.unlabeled),
            (5, 3, 1, 3),
        )
        self.assertEqual(tally.total_1, 4)


class LoadCorpusTests(TempDirMixin, SimpleTestCase):
    def test_two_line_file(self):
        path = self.write_lines(
            "c.jsonl",
            [
                {"id": "a", "text": "Um texto", "labels": {"sdg3": 1}},
                {"id": "b", "text": "Outro texto", "labels": {"sdg3": None}},
            ],
        )
        corpus = load_corpus(path)
        self.assertEqual(corpus.goals, ("sdg3",))
        self.assertEqual(corpus.get("a").label("sdg3").value, 1)
        self.assertFalse(corpus.get("b").label("sdg3").is_labeled)
        self.assertEqual(corpus.get("a").clean_text, "um texto")

    def test_duplicate_id(self):
        path = self.write_lines(
            "c.jsonl",
            [
                {"id": "a", "text": "x", "labels": {}},
                {"id": "a", "text": "y", "labels": {}},
            ],
        )
        with self.assertRaisesMessage(DuplicateDocumentError, "'a'"):
            load_corpus(path)

    def test_malformed_line_reports_line_number(self):
        path = self.write_lines(
            "c.jsonl", [{"id": "a", "text": "x", "labels": {}}, "{not json"]
        )
        with self.assertRaises(CorpusFormatError) as ctx:
            load_corpus(path)
        self.assertEqual(ctx.exception.line_number, 2)

    def test_unknown_goal_rejected(self):
        path = self.write_lines(
            "c.jsonl", [{"id": "a", "text": "x", "labels": {"sdg99": 1}}]
        )
        with self.assertRaises(UnknownGoalError):
            load_corpus(path, goals=["sdg9"])

    def test_table_one_tally(self):
        records = [
            {"id": f"d{i}", "text": "texto", "labels": {"sdg9": 1 if i < 68 else 0}}
            for i in range(2005)
        ]
        corpus = load_corpus(self.write_lines("c.jsonl", records))
        tally = corpus.label_tally("sdg9")
        self.assertEqual((tally.original_0, tally.original_1), (1937, 68))

    def test_dump_round_trip_keeps_provenance(self):
        corpus = make_corpus(2, 2, 2)
        doc = corpus.get("u0001").with_synthetic("g", 0)
        corpus = corpus.with_documents(
            [doc if d.id == "u0001" else d for d in corpus.documents]
        )
        path = dump_corpus(corpus, self.tmp / "out.jsonl")
        again = load_corpus(path)
        self.assertTrue(again.get("u0001").label("g").is_synthetic)
        self.assertTrue(again.get("p0000").label("g").is_original)
        self.assertEqual(again.original_label_digest(), corpus.original_label_digest())


class SplitTests(SimpleTestCase):
    def test_ten_documents(self):
        corpus = make_corpus(5, 5)
        split = split_labeled(corpus, "g", seed=7)
        self.assertEqual(split.sizes(), (6, 2, 2))
        for part in (Split.TRAIN, Split.VALIDATION, Split.TEST):
            self.assertTrue(any(doc_id.startswith("p") for doc_id in split.ids(part)))

    def test_deterministic(self):
        corpus = make_corpus(20, 40, 10)
        self.assertEqual(
            split_labeled(corpus, "g", 3).to_dict(), split_labeled(corpus, "g", 3).to_dict()
        )

    def test_largest_remainder_sizes(self):
        corpus = make_corpus(68, 1937)
        self.assertEqual(split_labeled(corpus, "g", 1).sizes(), (1203, 401, 401))

    def test_partition_and_stratification(self):
        corpus = make_corpus(60, 440, 50)
        split = split_labeled(corpus, "g", 5)
        labeled = {doc.id for doc in corpus.labeled("g")}
        self.assertEqual(set(split.assignment), labeled)
        whole = 60 / 500
        for part in (Split.TRAIN, Split.VALIDATION, Split.TEST):
            ids = split.ids(part)
            fraction = sum(doc_id.startswith("p") for doc_id in ids) / len(ids)
            self.assertLessEqual(abs(fraction - whole), 0.02)

    def test_too_few_labeled(self):
        with self.assertRaisesMessage(InsufficientLabelsError, "at least 5"):
            split_labeled(make_corpus(2, 2, 10), "g", 0)

    def test_manifest_round_trip(self):
        split = split_labeled(make_corpus(5, 5), "g", 7)
        self.assertEqual(SplitAssignment.from_dict(split.to_dict()).to_dict(), split.to_dict())


class UpsampleTests(SimpleTestCase):
    def train_only(self, corpus):
        return SplitAssignment(
            goal="g", seed=0, assignment={doc.id: Split.TRAIN for doc in corpus.labeled("g")}
        )

    def test_adds_smallest_number_of_replicas(self):
        corpus = make_corpus(1, 9)
        result = upsample(corpus, "g", self.train_only(corpus), 0.25, max_replicas=10)
        replicas = [doc for doc in result if doc.is_replica]
        self.assertEqual([doc.id for doc in replicas], ["p0000#r1", "p0000#r2"])
        self.assertTrue(all(doc.replica_of == "p0000" for doc in replicas))

    def test_no_change_above_target(self):
        corpus = make_corpus(5, 5)
        self.assertIs(upsample(corpus, "g", self.train_only(corpus), 0.25), corpus)

    def test_no_positives(self):
        corpus = make_corpus(0, 10)
        with self.assertRaises(NothingToUpsampleError):
            upsample(corpus, "g", self.train_only(corpus), 0.25)

    def test_cap_and_held_out_untouched(self):
        corpus = make_corpus(10, 190, 20)
        split = split_labeled(corpus, "g", 2)
        result = upsample(corpus, "g", split, 0.5, max_replicas=2)
        replicas = [doc for doc in result if doc.is_replica]
        self.assertEqual(len(replicas), 2 * len(
            [i for i in split.ids(Split.TRAIN) if i.startswith("p")]
        ))
        held_out = split.held_out()
        self.assertFalse({doc.replica_of for doc in replicas} & held_out)
        self.assertEqual(result.original_label_digest(), corpus.original_label_digest())
