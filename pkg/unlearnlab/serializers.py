from rest_framework import serializers

from unlearnlab.services.corpus import FORGET, RETAIN, WORLD
from unlearnlab.services.losses import FORGET_LOSSES, METHODS
from unlearnlab.services.unlearn import REFERENCE_POLICIES


class StrictSerializer(serializers.Serializer):
    """Serializer que rechaza claves desconocidas."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Campo desconocido.'] for key in unknown})
        return super().to_internal_value(data)


# Configuración de experimentos

class CorpusSectionSerializer(StrictSerializer):
    n_authors = serializers.IntegerField(min_value=10, default=100)
    n_qa_per_author = serializers.IntegerField(min_value=4, max_value=10, default=10)
    n_world = serializers.IntegerField(min_value=0, max_value=200, default=200)
    forget_fraction = serializers.FloatField(min_value=0, max_value=1, default=0.05)

    def validate_forget_fraction(self, value):
        """La fracción debe ser estrictamente positiva"""
        if value <= 0 or value >= 1:
            raise serializers.ValidationError('forget_fraction debe estar en (0, 1).')
        return value


class ModelSectionSerializer(StrictSerializer):
    d_model = serializers.IntegerField(min_value=2, default=64)
    n_layers = serializers.IntegerField(min_value=1, default=2)
    n_heads = serializers.IntegerField(min_value=1, default=2)
    context = serializers.IntegerField(min_value=2, default=64)
    tied = serializers.BooleanField(default=False)

    def validate(self, attrs):
        if attrs['d_model'] % attrs['n_heads']:
            raise serializers.ValidationError('d_model debe ser múltiplo de n_heads.')
        return attrs


class TrainSectionSerializer(StrictSerializer):
    lr = serializers.FloatField(min_value=0, default=3e-3)
    epochs = serializers.IntegerField(min_value=0, default=40)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    weight_decay = serializers.FloatField(min_value=0, default=0.01)


class FinetuneSectionSerializer(TrainSectionSerializer):
    replay_world = serializers.BooleanField(default=True)


class UnlearnSectionSerializer(StrictSerializer):
    method = serializers.ChoiceField(choices=METHODS + FORGET_LOSSES, default='ME+GD')
    alpha = serializers.FloatField(min_value=0, default=0.1)
    beta = serializers.FloatField(default=0.1)
    question_masking = serializers.BooleanField(allow_null=True, default=None)
    epochs = serializers.IntegerField(min_value=0, default=5)
    batch_size = serializers.IntegerField(min_value=1, default=32)
    lr = serializers.FloatField(min_value=0, default=3e-3)
    weight_decay = serializers.FloatField(min_value=0, default=0.01)
    precheck = serializers.BooleanField(default=True)
    precheck_threshold = serializers.FloatField(min_value=0, max_value=1, default=0.95)

    def validate_beta(self, value):
        if value <= 0:
            raise serializers.ValidationError('beta debe ser positivo.')
        return value


class ContinualSectionSerializer(StrictSerializer):
    fraction = serializers.FloatField(default=0.01)
    n_subtasks = serializers.IntegerField(min_value=1, default=10)
    supplement_floor = serializers.IntegerField(min_value=1, allow_null=True, default=None)
    reference_policy = serializers.ChoiceField(choices=REFERENCE_POLICIES, default='previous')
    alpha = serializers.FloatField(min_value=0, default=1.0)
    epochs_per_subtask = serializers.IntegerField(min_value=1, default=5)

    def validate_fraction(self, value):
        if not 0 < value < 1:
            raise serializers.ValidationError('fraction debe estar en (0, 1).')
        return value


class EvalSectionSerializer(StrictSerializer):
    max_len = serializers.IntegerField(min_value=1, default=32)


class BackendsSectionSerializer(StrictSerializer):
    base_url = serializers.CharField(allow_null=True, allow_blank=True, default=None)
    timeout = serializers.FloatField(default=10.0)
    retries = serializers.IntegerField(min_value=0, default=2)
    backoff = serializers.FloatField(min_value=0, default=0.5)

    def validate_timeout(self, value):
        if value <= 0:
            raise serializers.ValidationError('timeout debe ser positivo.')
        return value


class ExperimentConfigSerializer(StrictSerializer):
    seed = serializers.IntegerField(default=0)
    output_dir = serializers.CharField(allow_null=True, default=None)
    corpus = CorpusSectionSerializer()
    model = ModelSectionSerializer()
    pretrain = TrainSectionSerializer()
    finetune = FinetuneSectionSerializer()
    unlearn = UnlearnSectionSerializer()
    continual = ContinualSectionSerializer()
    eval = EvalSectionSerializer()
    backends = BackendsSectionSerializer()


# Artefactos

class QAExampleSerializer(StrictSerializer):
    question = serializers.CharField()
    answer = serializers.CharField()
    paraphrase = serializers.CharField()
    perturbed = serializers.ListField(child=serializers.CharField(), min_length=1)
    tag = serializers.ChoiceField(choices=(FORGET, RETAIN, WORLD))
    author = serializers.CharField(allow_null=True)


class SetMetricsSerializer(StrictSerializer):
    R = serializers.FloatField(min_value=0, max_value=1)
    P = serializers.FloatField(min_value=0, max_value=1)
    TR = serializers.FloatField(min_value=0, max_value=1)
    TE = serializers.FloatField(min_value=0, max_value=1)
    CS = serializers.FloatField(min_value=0, max_value=1)
    ES = serializers.FloatField(min_value=0, max_value=1)
    MU = serializers.FloatField(min_value=0, max_value=1)
    FE = serializers.FloatField(min_value=0, max_value=1)


class MetricReportSerializer(StrictSerializer):
    forget = SetMetricsSerializer(required=False)
    retain = SetMetricsSerializer(required=False)
    world = SetMetricsSerializer(required=False)
    MU = serializers.FloatField(min_value=0, max_value=1)
    FE = serializers.FloatField(min_value=0, max_value=1)


class RunRecordSerializer(StrictSerializer):
    method = serializers.CharField()
    epoch = serializers.IntegerField(min_value=0)
    subtask = serializers.IntegerField(min_value=0, allow_null=True)
    retain_size = serializers.IntegerField(min_value=0, allow_null=True)
    kind = serializers.ChoiceField(choices=('unlearn', 'continual', 'eval'))
    seed = serializers.IntegerField()
    config_hash = serializers.CharField(allow_blank=True)
    wall_time = serializers.FloatField(min_value=0)
    report = MetricReportSerializer()


# Gateway HTTP

class EmbedRequestSerializer(StrictSerializer):
    texts = serializers.ListField(
        child=serializers.CharField(allow_blank=True, trim_whitespace=False), min_length=1
    )


class NliRequestSerializer(StrictSerializer):
    premise = serializers.CharField(allow_blank=True, trim_whitespace=False)
    hypothesis = serializers.CharField(allow_blank=True, trim_whitespace=False)


class ChatRequestSerializer(StrictSerializer):
    prompt = serializers.CharField(trim_whitespace=False)

