from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Fit the k-means model augmentation uses and save it for inspection."
    per_goal = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--k", type=int, help="Cluster count; defaults to the tuned one.")

    def run(self, workspace, **options):
        for goal in self.get_goals(workspace, options):
            model = workspace.cluster(goal, k=options.get("k"))
            self.stdout.write(
                f"{goal}: K={model.k} inertia={model.inertia:.6f} "
                f"iterations={model.iterations_run} converged={model.converged}"
            )
            self.stdout.write(
                self.style.SUCCESS(f"Wrote {workspace.clusters_dir(goal, model.k)}")
            )
