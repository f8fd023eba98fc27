from rest_framework import serializers

from apps.basis.domain import BasisKind
from apps.core.exceptions import DomainError
from apps.families.domain import IndexWeights
from .domain import Criterion, TestSpec, VarianceMode


class IndexWeightSerializer(serializers.Serializer):
    """One kernel weight, referenced by its multi-index"""

    index = serializers.ListField(child=serializers.IntegerField(), allow_empty=True)
    weight = serializers.FloatField(min_value=0.0)


class TestSpecSerializer(serializers.Serializer):
    """Serializer for TestSpec"""

    basis = serializers.ChoiceField(choices=BasisKind.choices, default=BasisKind.FOURIER)
    variance_mode = serializers.ChoiceField(choices=VarianceMode.choices, default=VarianceMode.KNOWN)
    tau2 = serializers.FloatField(required=False, allow_null=True, default=1.0)
    alpha = serializers.FloatField(required=False, allow_null=True, default=None)
    criterion = serializers.ChoiceField(choices=Criterion.choices, default=Criterion.NEYMAN_PEARSON)
    threshold = serializers.FloatField()
    weights = IndexWeightSerializer(many=True)

    def validate(self, attrs):
        try:
            attrs['weights'] = IndexWeights.from_mapping(
                {tuple(item['index']): item['weight'] for item in attrs['weights']}
            )
            TestSpec(**attrs)
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def create(self, validated_data):
        return TestSpec(**validated_data)

    def to_representation(self, instance):
        return {
            'basis': instance.basis.value,
            'variance_mode': instance.variance_mode.value,
            'tau2': instance.tau2,
            'alpha': instance.alpha,
            'criterion': instance.criterion.value,
            'threshold': instance.threshold,
            'weights': [
                {'index': [int(e) for e in key], 'weight': float(value)}
                for key, value in zip(instance.weights.keys(), instance.weights.values)
            ],
        }


class TestOutcomeSerializer(serializers.Serializer):
    """Serializer for TestOutcome"""

    statistic = serializers.FloatField()
    threshold = serializers.FloatField()
    reject = serializers.BooleanField()
    tau2 = serializers.FloatField()
    n = serializers.IntegerField()
