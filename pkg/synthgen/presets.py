from dataclasses import replace

from core.exceptions import ConfigError
from synthgen.generator import SyntheticSpec

PRESETS = {
    # two balanced topics, topic 1 is the goal
    "sep2": SyntheticSpec(
        docs_per_topic=(500, 500),
        separability=0.8,
        labeled_fraction=0.1,
        noise=0.0,
        positive_topics={"g1": (1,)},
    ),
    # the positive topic holds 5% of the documents
    "sep2-imbalanced": SyntheticSpec(
        docs_per_topic=(1900, 100),
        separability=0.8,
        labeled_fraction=0.1,
        noise=0.0,
        positive_topics={"g1": (1,)},
    ),
    "sep5-noisy": SyntheticSpec(
        docs_per_topic=(300, 300, 300, 300, 300),
        separability=0.7,
        labeled_fraction=0.1,
        noise=0.1,
        positive_topics={"g1": (0,), "g2": (1, 2)},
    ),
}


def get_preset(name, **overrides):
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"Unknown synthetic preset {name!r}; choose from {sorted(PRESETS)}."
        ) from None
    return replace(spec, **overrides) if overrides else spec
