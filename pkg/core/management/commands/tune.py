from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Split, upsample and grid-search the propagation parameters per goal."
    per_goal = True

    def run(self, workspace, **options):
        for goal in self.get_goals(workspace, options):
            workspace.split(goal)
            workspace.upsample(goal)
            report = workspace.tune(goal)
            record = report.best_record()
            self.stdout.write(
                f"{goal}: K={record['clusters']} radius={record['distance']} "
                f"threshold={record['threshold']} accuracy={record['accuracy']:.3f} "
                f"sensitivity={record['sensitivity']:.3f} "
                f"test_accuracy={record['test_accuracy']:.3f}"
            )
            self.stdout.write(self.style.SUCCESS(f"Wrote {workspace.grid_path(goal)}"))
