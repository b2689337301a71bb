"""Shared plumbing of the pipeline subcommands."""
import logging

from django.core.management.base import BaseCommand, CommandError

from core.config import load_config
from core.exceptions import PipelineError
from core.pipeline import Workspace

logger = logging.getLogger(__name__)


def split_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


class PipelineCommand(BaseCommand):
    """
    A subcommand working on the output directory of one pipeline config.

    Subclasses implement ``run(workspace, **options)``; every
    ``PipelineError`` leaves the process with the error's exit code.
    """

    per_goal = False

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Pipeline config YAML file.")
        parser.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="Override a config key, e.g. --set grid.clusters=[5,10].",
        )
        parser.add_argument("--seed", type=int, help="Master seed (config key seed).")
        parser.add_argument("--workers", type=int, help="Worker processes (config key workers).")
        parser.add_argument("--output-dir", help="Artifact root (config key output_dir).")
        parser.add_argument(
            "--goals", type=split_list, help="Comma-separated goals (config key goals)."
        )
        if self.per_goal:
            parser.add_argument("--goal", help="Process only this goal.")

    def get_workspace(self, options):
        config = load_config(
            options.get("config"),
            overrides=options.get("overrides", ()),
            seed=options.get("seed"),
            workers=options.get("workers"),
            output_dir=options.get("output_dir"),
            goals=options.get("goals"),
        )
        return Workspace(config)

    def get_goals(self, workspace, options):
        goal = options.get("goal")
        if goal:
            workspace.corpus.check_goal(goal)
            return [goal]
        return list(workspace.goals)

    def handle(self, *args, **options):
        try:
            self.run(self.get_workspace(options), **options)
        except PipelineError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

    def run(self, workspace, **options):
        raise NotImplementedError
