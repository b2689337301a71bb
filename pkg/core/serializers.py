"""
Schema of the pipeline config document.

Sections may be left out entirely; a missing key falls back to the default
of the dataclass the section is turned into (see ``core.config``).
"""
from rest_framework import serializers

from classifier.network import ClassifierConfig
from core.models import PipelineRun
from embedding.backends import BACKENDS


class StrictSerializer(serializers.Serializer):
    """Rejects keys the schema does not know, so typos never pass silently."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ["Unknown key."] for key in unknown})
        return super().to_internal_value(data)


class PercentField(serializers.FloatField):
    """A percentage in [0, 100]; whole numbers stay ints so ``25`` and ``25.0`` agree."""

    def __init__(self, **kwargs):
        super().__init__(min_value=0, max_value=100, **kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        return int(value) if value.is_integer() else value


class CorpusSectionSerializer(StrictSerializer):
    labeled = serializers.CharField()
    unlabeled = serializers.CharField(required=False, allow_null=True)


class Doc2VecSectionSerializer(StrictSerializer):
    vector_size = serializers.IntegerField(min_value=2, required=False)
    epochs = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(min_value=0, required=False)
    negative = serializers.IntegerField(min_value=1, required=False)
    sample = serializers.FloatField(min_value=0, required=False)
    infer_epochs = serializers.IntegerField(min_value=1, required=False)


class EmbeddingSectionSerializer(StrictSerializer):
    backend = serializers.ChoiceField(choices=BACKENDS, required=False)
    min_count = serializers.IntegerField(min_value=1, required=False)
    projection_dim = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    doc2vec = Doc2VecSectionSerializer(required=False)


class UpsampleSectionSerializer(StrictSerializer):
    enabled = serializers.BooleanField(required=False)
    target_positive_fraction = serializers.FloatField(min_value=0, max_value=1, required=False)
    max_replicas = serializers.IntegerField(min_value=0, required=False)


class GridSectionSerializer(StrictSerializer):
    clusters = serializers.ListField(
        child=serializers.IntegerField(min_value=2), allow_empty=False, required=False
    )
    radii = serializers.ListField(child=PercentField(), allow_empty=False, required=False)
    thresholds = serializers.ListField(child=PercentField(), allow_empty=False, required=False)
    min_coverage = serializers.FloatField(min_value=0, max_value=1, required=False)


class ClassifierSectionSerializer(StrictSerializer):
    hidden_sizes = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_empty=False, required=False
    )
    dropout = serializers.ListField(
        child=serializers.FloatField(min_value=0, max_value=1), allow_empty=False, required=False
    )
    epochs = serializers.IntegerField(min_value=1, required=False)
    learning_rate = serializers.FloatField(min_value=0, required=False)
    batch_size = serializers.IntegerField(min_value=1, required=False)
    threshold = serializers.FloatField(min_value=0, max_value=1, required=False)

    def validate(self, data):
        # both lists describe the same hidden layers
        if "hidden_sizes" in data or "dropout" in data:
            hidden = data.get("hidden_sizes", ClassifierConfig.hidden_sizes)
            if len(hidden) != len(data.get("dropout", ClassifierConfig.dropout)):
                raise serializers.ValidationError(
                    "hidden_sizes and dropout must have the same length."
                )
        return data


class BootstrapSectionSerializer(StrictSerializer):
    iterations = serializers.IntegerField(min_value=2, required=False)
    sample_fraction = serializers.FloatField(min_value=0, max_value=1, required=False)
    max_redraws = serializers.IntegerField(min_value=1, required=False)


class PipelineConfigSerializer(StrictSerializer):
    corpus = CorpusSectionSerializer()
    goals = serializers.ListField(
        child=serializers.CharField(), allow_empty=False, required=False
    )
    embedding = EmbeddingSectionSerializer(required=False)
    upsample = UpsampleSectionSerializer(required=False)
    grid = GridSectionSerializer(required=False)
    classifier = ClassifierSectionSerializer(required=False)
    bootstrap = BootstrapSectionSerializer(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    output_dir = serializers.CharField(required=False)
    workers = serializers.IntegerField(min_value=1, required=False)

    def validate_goals(self, value):
        if len(set(value)) != len(value):
            raise serializers.ValidationError("Goals must not repeat.")
        return value


def flatten_errors(errors, prefix=""):
    """``serializer.errors`` as ``dotted.key: message`` lines."""
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            child = prefix if key == "non_field_errors" else f"{prefix}{key}."
            lines += flatten_errors(value, child)
    elif all(isinstance(error, str) for error in errors):
        lines += [f"{prefix.rstrip('.') or 'config'}: {error}" for error in errors]
    else:
        for index, value in enumerate(errors):
            lines += flatten_errors(value, f"{prefix}{index}.")
    return lines


class PipelineRunSerializer(serializers.ModelSerializer):
    stage_count = serializers.IntegerField(read_only=True)

    class Meta:
        model = PipelineRun
        fields = [
            "id",
            "created_at",
            "status",
            "config_digest",
            "output_dir",
            "seed",
            "goals",
            "stage_count",
            "failed_stage",
            "failed_goal",
            "failure",
        ]
