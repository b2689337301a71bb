from core.management.base import PipelineCommand


def _p(value):
    return "n/a" if value is None else f"{value:.4g}"


class Command(PipelineCommand):
    help = "Bootstrap-compare classifiers trained on original and augmented labels."
    per_goal = True

    def run(self, workspace, **options):
        for goal in self.get_goals(workspace, options):
            row = workspace.evaluate(goal).summary_row()
            self.stdout.write(
                f"{goal}: accuracy {row['orig_acc']:.3f} -> {row['aug_acc']:.3f} "
                f"(p={_p(row['p_acc'])}), sensitivity {row['orig_sens']:.3f} -> "
                f"{row['aug_sens']:.3f} (p={_p(row['p_sens'])})"
            )
            self.stdout.write(self.style.SUCCESS(f"Wrote {workspace.bootstrap_path(goal)}"))
