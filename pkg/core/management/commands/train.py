from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Train the final classifiers on the original and on the augmented labels."
    per_goal = True

    def run(self, workspace, **options):
        for goal in self.get_goals(workspace, options):
            models = workspace.train(goal)
            for arm, model in models.items():
                self.stdout.write(
                    f"{goal}/{arm}: {len(model.loss_curve)} epochs, "
                    f"final loss {model.loss_curve[-1]:.4f}"
                )
            self.stdout.write(
                self.style.SUCCESS(f"Wrote {workspace.goal_dir(goal) / 'classifier'}")
            )
