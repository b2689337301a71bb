from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.config import apply_override
from core.exceptions import ConfigError, PipelineError
from synthgen.generator import write_synthetic
from synthgen.presets import PRESETS, get_preset


class Command(BaseCommand):
    help = "Write a synthetic topic corpus and its ground truth."

    def add_arguments(self, parser):
        parser.add_argument("--preset", choices=sorted(PRESETS), default="sep2")
        parser.add_argument("--out", required=True, help="Directory for corpus.jsonl and truth.json.")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="FIELD=VALUE",
            help="Override a preset field, e.g. --set separability=0.9.",
        )

    def handle(self, *args, **options):
        try:
            fields = {"seed": options["seed"]}
            for assignment in options["overrides"]:
                apply_override(fields, assignment)
            try:
                spec = get_preset(options["preset"], **fields)
            except TypeError as exc:
                raise ConfigError(f"Invalid preset override: {exc}") from exc
            corpus, _ = write_synthetic(spec, Path(options["out"]))
        except PipelineError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        for goal in corpus.goals:
            tally = corpus.label_tally(goal)
            self.stdout.write(
                f"{goal}: {len(corpus)} documents, {tally.original_0} labeled 0, "
                f"{tally.original_1} labeled 1, {tally.unlabeled} unlabeled"
            )
        self.stdout.write(self.style.SUCCESS(f"Wrote preset {options['preset']} to {options['out']}"))
