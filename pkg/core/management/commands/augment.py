from core.exceptions import ConfigError
from core.management.base import PipelineCommand
from propagation.rules import PropagationParams


def parse_params(value):
    """``K,radius,threshold`` as PropagationParams."""
    parts = [part.strip() for part in value.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"--params expects K,radius,threshold, got {value!r}.")
    try:
        numbers = [float(part) for part in parts]
    except ValueError:
        raise ConfigError(f"--params expects numbers, got {value!r}.") from None
    k, radius, threshold = (int(n) if n.is_integer() else n for n in numbers)
    return PropagationParams(k, radius, threshold)


class Command(PipelineCommand):
    help = "Propagate synthetic labels with the tuned (or given) parameters."
    per_goal = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--params",
            help="K,radius,threshold overriding the grid search result, e.g. 10,100,50.",
        )

    def run(self, workspace, **options):
        params = parse_params(options["params"]) if options.get("params") else None
        for goal in self.get_goals(workspace, options):
            result = workspace.augment(goal, params)
            report = result.report
            self.stdout.write(
                f"{goal}: {report.synthetic_1} synthetic 1, {report.synthetic_0} synthetic 0, "
                f"{report.skipped} neighborhoods skipped"
            )
            for warning in report.warnings:
                self.stdout.write(self.style.WARNING(f"{goal}: {warning}"))
            self.stdout.write(self.style.SUCCESS(f"Wrote {workspace.augmentation_path(goal)}"))
