class PipelineError(Exception):
    exit_code = 4


class ConfigError(PipelineError, ValueError):
    exit_code = 2


class DataError(PipelineError, ValueError):
    exit_code = 3


class StageError(PipelineError, RuntimeError):
    exit_code = 4

    def __init__(self, message, stage=None, goal=None):
        super().__init__(message)
        self.stage = stage
        self.goal = goal


class MissingArtifactError(DataError):
    def __init__(self, path, producer):
        super().__init__(
            f"Missing artifact {path}; produce it with `manage.py {producer}` first."
        )
        self.path = path
        self.producer = producer


class TrainingDivergedError(StageError):
    def __init__(self, model, epoch, step, loss):
        super().__init__(
            f"{model} training produced a non-finite loss ({loss}) "
            f"at epoch {epoch}, step {step}."
        )
        self.epoch = epoch
        self.step = step
        self.loss = loss
