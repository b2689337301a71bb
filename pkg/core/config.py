"""
Pipeline configuration: a YAML document, dotted ``--set`` overrides and a
few direct flags, validated by ``core.serializers`` and frozen into
``PipelineConfig``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from django.conf import settings
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from classifier.bootstrap import (
    DEFAULT_ITERATIONS,
    DEFAULT_MAX_REDRAWS,
    DEFAULT_SAMPLE_FRACTION,
)
from classifier.network import ClassifierConfig
from core.artifacts import data_digest, layout_root
from core.exceptions import ConfigError
from core.serializers import PipelineConfigSerializer, flatten_errors
from corpus.upsampling import DEFAULT_MAX_REPLICAS, DEFAULT_TARGET_FRACTION
from embedding.backends import EmbeddingSettings
from embedding.doc2vec import Doc2VecParams
from tuning.grid import ParamGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorpusPaths:
    labeled: Path
    unlabeled: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, "labeled", Path(self.labeled))
        if self.unlabeled is not None:
            object.__setattr__(self, "unlabeled", Path(self.unlabeled))

    def paths(self):
        return [self.labeled] + ([self.unlabeled] if self.unlabeled is not None else [])


@dataclass(frozen=True)
class UpsampleSettings:
    enabled: bool = True
    target_positive_fraction: float = DEFAULT_TARGET_FRACTION
    max_replicas: int = DEFAULT_MAX_REPLICAS

    def __post_init__(self):
        if not 0 < self.target_positive_fraction < 1:
            raise ConfigError(
                "upsample.target_positive_fraction must lie in (0, 1), "
                f"got {self.target_positive_fraction}."
            )


@dataclass(frozen=True)
class BootstrapSettings:
    iterations: int = DEFAULT_ITERATIONS
    sample_fraction: float = DEFAULT_SAMPLE_FRACTION
    max_redraws: int = DEFAULT_MAX_REDRAWS

    def __post_init__(self):
        if self.iterations < 2:
            raise ConfigError(f"bootstrap.iterations must be >= 2, got {self.iterations}.")
        if not 0 < self.sample_fraction <= 1:
            raise ConfigError(
                f"bootstrap.sample_fraction must lie in (0, 1], got {self.sample_fraction}."
            )


@dataclass(frozen=True)
class PipelineConfig:
    corpus: CorpusPaths
    goals: Optional[tuple] = None
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    upsample: UpsampleSettings = field(default_factory=UpsampleSettings)
    grid: ParamGrid = field(default_factory=ParamGrid)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    bootstrap: BootstrapSettings = field(default_factory=BootstrapSettings)
    seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path(settings.CLUSTER_AUGMENT_OUTPUT_DIR))
    workers: int = field(default_factory=lambda: settings.CLUSTER_AUGMENT_WORKERS)

    def __post_init__(self):
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        if self.goals is not None:
            if not self.goals:
                raise ConfigError("goals must not be empty; leave it out to process every goal.")
            object.__setattr__(self, "goals", tuple(self.goals))

    @property
    def root(self):
        return layout_root(self.output_dir)

    def to_dict(self):
        return {
            "corpus": {
                "labeled": str(self.corpus.labeled),
                "unlabeled": None if self.corpus.unlabeled is None else str(self.corpus.unlabeled),
            },
            "goals": None if self.goals is None else list(self.goals),
            "embedding": asdict(self.embedding),
            "upsample": asdict(self.upsample),
            "grid": asdict(self.grid),
            "classifier": {
                key: value for key, value in asdict(self.classifier).items() if key != "seed"
            },
            "bootstrap": asdict(self.bootstrap),
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "workers": self.workers,
        }

    @property
    def digest(self):
        """Identity of the results; the worker count never changes them."""
        data = self.to_dict()
        del data["workers"]
        return data_digest(data)


def _yaml():
    return YAML(typ="safe")


def read_config_file(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file {path} does not exist.")
    try:
        with open(path, encoding="utf-8") as handle:
            data = _yaml().load(handle)
    except YAMLError as exc:
        raise ConfigError(f"Config file {path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a mapping at the top level.")
    return data


def apply_override(data, assignment):
    """Set ``dotted.key=value`` in ``data``; the value is read as YAML."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"Override {assignment!r} is not of the form dotted.key=value.")
    try:
        value = _yaml().load(raw) if raw.strip() else None
    except YAMLError as exc:
        raise ConfigError(f"Override {assignment!r} has an unreadable value: {exc}") from exc

    *parents, leaf = key.strip().split(".")
    node = data
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"Override {assignment!r}: {part!r} is not a section.")
    node[leaf] = value
    return data


def build_config(data) -> PipelineConfig:
    serializer = PipelineConfigSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(
            "Invalid pipeline config:\n  " + "\n  ".join(flatten_errors(serializer.errors))
        )
    values = serializer.validated_data

    embedding = dict(values.get("embedding", {}))
    if "doc2vec" in embedding:
        embedding["doc2vec"] = Doc2VecParams(**embedding["doc2vec"])
    grid = {
        key: tuple(value) if isinstance(value, list) else value
        for key, value in values.get("grid", {}).items()
    }

    kwargs = {
        "corpus": CorpusPaths(**values["corpus"]),
        "embedding": EmbeddingSettings(**embedding),
        "upsample": UpsampleSettings(**values.get("upsample", {})),
        "grid": ParamGrid(**grid),
        "classifier": ClassifierConfig(**values.get("classifier", {})),
        "bootstrap": BootstrapSettings(**values.get("bootstrap", {})),
    }
    for key in ("goals", "seed", "output_dir", "workers"):
        if key in values:
            kwargs[key] = values[key]
    return PipelineConfig(**kwargs)


def load_config(
    path=None, overrides=(), seed=None, workers=None, output_dir=None, goals=None
) -> PipelineConfig:
    """
    Read, override and validate a pipeline config.

    Flags map one-to-one onto config keys and win over both the file and the
    ``--set`` overrides.
    """
    data = read_config_file(path) if path else {}
    for assignment in overrides:
        apply_override(data, assignment)
    flags = {"seed": seed, "workers": workers, "output_dir": output_dir, "goals": goals}
    for key, value in flags.items():
        if value is not None:
            data[key] = value
    config = build_config(data)
    logger.debug("Loaded config %s (digest %s)", path or "<flags>", config.digest[:12])
    return config
