from core.management.base import PipelineCommand


class Command(PipelineCommand):
    help = "Embed every document of the configured corpus."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            "--model",
            help="Directory of a trained doc2vec model; infer vectors instead of training.",
        )

    def run(self, workspace, **options):
        matrix = workspace.embed(model_dir=options.get("model"))
        self.stdout.write(
            self.style.SUCCESS(
                f"Embedded {len(matrix.ids)} documents ({matrix.tag}) into "
                f"{workspace.embeddings_dir}"
            )
        )
