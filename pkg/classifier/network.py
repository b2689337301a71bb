"""
Binary feedforward classifier over document embeddings.

Architecture::

    Input -> [Linear(h_i) -> ReLU -> Dropout(p_i)] * n -> Linear(1) -> Sigmoid

trained with mean binary cross-entropy and Adam. Training runs inside a
forked torch RNG seeded from the config, so a fit is reproducible and never
disturbs the caller's random state. Fits running in threads of one process
take turns, since they would otherwise share that generator.
"""
from __future__ import annotations

import logging
import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from core.artifacts import FORMAT_VERSION, check_format, read_json, write_json
from core.exceptions import ConfigError, DataError, TrainingDivergedError

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
MIN_PER_CLASS = 2

# torch draws weights and dropout masks from one process-wide generator
_TORCH_RNG = threading.Lock()


class SingleClassError(DataError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    hidden_sizes: tuple = (64, 16)
    dropout: tuple = (0.8, 0.6)
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(self.hidden_sizes))
        object.__setattr__(self, "dropout", tuple(self.dropout))
        if len(self.hidden_sizes) != len(self.dropout):
            raise ConfigError("hidden_sizes and dropout must have the same length.")
        if any(size < 1 for size in self.hidden_sizes):
            raise ConfigError(f"hidden_sizes must be positive, got {list(self.hidden_sizes)}.")
        if any(not 0 <= p < 1 for p in self.dropout):
            raise ConfigError(f"dropout probabilities must lie in [0, 1), got {list(self.dropout)}.")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}.")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1.")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}.")


def build_network(input_dim, config: ClassifierConfig) -> nn.Sequential:
    layers = []
    width = input_dim
    for size, p in zip(config.hidden_sizes, config.dropout):
        layers += [nn.Linear(width, size), nn.ReLU(), nn.Dropout(p)]
        width = size
    layers += [nn.Linear(width, 1), nn.Sigmoid()]
    return nn.Sequential(*layers)


@dataclass(eq=False)
class TrainedClassifier:
    module: nn.Sequential
    config: ClassifierConfig
    loss_curve: tuple
    feature_tag: str
    input_dim: int = field(init=False)

    def __post_init__(self):
        self.input_dim = self.module[0].in_features
        self.module.eval()

    def check_features(self, matrix):
        if matrix.tag != self.feature_tag:
            raise DataError(
                f"Classifier was trained on {self.feature_tag} features, got {matrix.tag}."
            )

    def probabilities(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        if x.shape[1] != self.input_dim:
            raise DataError(
                f"Input has dimension {x.shape[1]}, the classifier expects {self.input_dim}."
            )
        dtype = next(self.module.parameters()).dtype
        with torch.no_grad():
            out = self.module(torch.as_tensor(x, dtype=dtype)).squeeze(1)
        return out.numpy().astype(np.float64)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.module.state_dict(), directory / "weights.pt")
        write_json(directory / "loss_curve.json", list(self.loss_curve))
        write_json(
            directory / "meta.json",
            {
                "format_version": FORMAT_VERSION,
                "kind": "classifier",
                "config": asdict(self.config),
                "feature_tag": self.feature_tag,
                "input_dim": self.input_dim,
            },
        )
        return directory

    @classmethod
    def load(cls, directory):
        directory = Path(directory)
        meta = read_json(directory / "meta.json", "train")
        check_format(meta, directory)
        config = ClassifierConfig(**meta["config"])
        module = build_network(meta["input_dim"], config)
        module.load_state_dict(torch.load(directory / "weights.pt"))
        return cls(
            module=module,
            config=config,
            loss_curve=tuple(read_json(directory / "loss_curve.json", "train")),
            feature_tag=meta["feature_tag"],
        )


def check_classes(y):
    counts = np.bincount(np.asarray(y, dtype=np.int64), minlength=2)
    if counts.min() < MIN_PER_CLASS:
        raise SingleClassError(
            f"Training needs at least {MIN_PER_CLASS} examples of each class, "
            f"got {int(counts[0])} negatives and {int(counts[1])} positives."
        )


def fit(X, y, config: ClassifierConfig, feature_tag="") -> TrainedClassifier:
    """Train on dense rows ``X`` (n x D) and 0/1 targets ``y``."""
    check_classes(y)
    X = torch.as_tensor(np.asarray(X), dtype=torch.float32)
    y = torch.as_tensor(np.asarray(y), dtype=torch.float32)

    with _TORCH_RNG, torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        module = build_network(X.shape[1], config)
        optimizer = torch.optim.Adam(
            module.parameters(), lr=config.learning_rate, betas=ADAM_BETAS, eps=ADAM_EPS
        )
        criterion = nn.BCELoss()
        loader = DataLoader(
            TensorDataset(X, y),
            batch_size=config.batch_size,
            shuffle=True,
            generator=torch.Generator().manual_seed(config.seed),
        )

        loss_curve = []
        module.train()
        for epoch in range(config.epochs):
            total = 0.0
            for step, (batch_x, batch_y) in enumerate(loader):
                optimizer.zero_grad()
                loss = criterion(module(batch_x).squeeze(1), batch_y)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError("classifier", epoch + 1, step, value)
                loss.backward()
                optimizer.step()
                total += value * batch_x.shape[0]
            loss_curve.append(total / X.shape[0])
            logger.debug("classifier epoch %d loss %.5f", epoch + 1, loss_curve[-1])

    for parameter in module.parameters():
        if not torch.all(torch.isfinite(parameter)):
            raise TrainingDivergedError("classifier", config.epochs, -1, float("nan"))
    return TrainedClassifier(
        module=module, config=config, loss_curve=tuple(loss_curve), feature_tag=feature_tag
    )


def train(features, labels, config: ClassifierConfig) -> TrainedClassifier:
    """
    Fit on every document of ``labels`` (doc id to 0/1, original or
    synthetic) using its row of the ``features`` embedding.
    """
    ids = sorted(labels)
    unlabeled = [doc_id for doc_id in ids if labels[doc_id] is None]
    if unlabeled:
        raise DataError(f"{len(unlabeled)} training documents carry no label, e.g. {unlabeled[:3]}.")
    X = features.rows(ids)
    y = np.array([labels[doc_id] for doc_id in ids], dtype=np.int64)
    model = fit(X, y, config, feature_tag=features.tag)
    logger.info(
        "Trained classifier on %d documents (%d positive), final loss %.4f",
        len(ids),
        int(y.sum()),
        model.loss_curve[-1],
    )
    return model


def predict(model: TrainedClassifier, x):
    """Probability of label 1 and the label itself; 1 only when strictly above threshold."""
    probability = float(model.probabilities(x)[0])
    return probability, int(probability > model.config.threshold)


def metrics(model: TrainedClassifier, X, y):
    """Accuracy and sensitivity of ``model`` on rows ``X`` with truth ``y``."""
    y = np.asarray(y, dtype=np.int64)
    predicted = (model.probabilities(X) > model.config.threshold).astype(np.int64)
    accuracy = float(np.mean(predicted == y))
    positives = y == 1
    sensitivity = float(np.mean(predicted[positives] == 1)) if positives.any() else 0.0
    return accuracy, sensitivity
