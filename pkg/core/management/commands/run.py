from core.management.base import PipelineCommand
from core.pipeline import run_pipeline


class Command(PipelineCommand):
    help = "Run the whole pipeline, resuming from unchanged artifacts."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--force", action="store_true", help="Recompute every stage, ignoring the cache."
        )

    def run(self, workspace, **options):
        manifest = run_pipeline(workspace.config, force=options["force"])
        for goal, outcome in manifest.goals.items():
            best = outcome["best"]
            summary = outcome["summary"]
            self.stdout.write(
                f"{goal}: K={best['clusters']} radius={best['distance']} "
                f"threshold={best['threshold']}; sensitivity {summary['orig_sens']:.3f} -> "
                f"{summary['aug_sens']:.3f}"
            )
        cached = sum(1 for stage in manifest.stages.values() if stage["status"] == "cached")
        self.stdout.write(
            self.style.SUCCESS(
                f"Run complete, {cached} of {len(manifest.stages)} stages reused; "
                f"manifest at {workspace.manifest_path}"
            )
        )
