from core.management.base import PipelineCommand
from core.statistics.reports import render_reports, run_history


class Command(PipelineCommand):
    help = "Render the report CSVs from stored artifacts, or list past runs."
    per_goal = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--history", action="store_true", help="List recorded runs.")
        parser.add_argument(
            "--all", action="store_true", help="With --history, include superseded runs."
        )

    def handle(self, *args, **options):
        if options["history"]:
            self.show_history(options["all"])
            return
        super().handle(*args, **options)

    def show_history(self, include_inactive):
        runs = run_history(include_inactive)
        if not runs:
            self.stdout.write("No runs recorded.")
        for run in runs:
            line = (
                f"#{run['id']} {run['created_at']} {run['status']} "
                f"{run['config_digest'][:12]} {run['output_dir']} "
                f"goals={','.join(run['goals'])} stages={run['stage_count']}"
            )
            if run["status"] == "failed":
                line += f" failed at {run['failed_goal'] or '*'}/{run['failed_stage']}"
            self.stdout.write(line)

    def run(self, workspace, **options):
        paths = render_reports(workspace, self.get_goals(workspace, options))
        for path in paths:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))
