from rest_framework import serializers

from apps.core.exceptions import DomainError
from .domain import CoefficientFamily, FiniteFamily, Variant


class CoefficientFamilySerializer(serializers.Serializer):
    """Serializer for the JSON form of a CoefficientFamily"""

    variant = serializers.CharField()
    d = serializers.IntegerField(required=False, allow_null=True, min_value=1)
    sigma = serializers.FloatField(required=False, allow_null=True)
    s = serializers.FloatField(required=False, allow_null=True)
    kappa = serializers.FloatField(required=False, allow_null=True)
    m = serializers.IntegerField(required=False, allow_null=True, min_value=0)

    def validate_variant(self, value):
        try:
            return Variant.parse(value)
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))

    def validate(self, attrs):
        try:
            CoefficientFamily(**attrs)
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def create(self, validated_data):
        return CoefficientFamily(**validated_data)

    def to_representation(self, instance):
        data = super().to_representation(instance)
        return {key: value for key, value in data.items() if value is not None}


class FiniteFamilySerializer(serializers.Serializer):
    """Serializer for an explicit coefficient table"""

    coefficients = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), allow_empty=False
    )

    def validate_coefficients(self, value):
        if any(c <= 0 for c in value):
            raise serializers.ValidationError("Coefficients must be positive")
        return value

    def create(self, validated_data):
        return FiniteFamily(tuple(validated_data['coefficients']))


def load_family(data):
    """Build a family from its JSON object, raising DomainError on bad input"""
    serializer_class = FiniteFamilySerializer if 'coefficients' in data else CoefficientFamilySerializer
    serializer = serializer_class(data=data)
    if not serializer.is_valid():
        raise DomainError(f"Invalid family: {dict(serializer.errors)}")
    return serializer.save()


def dump_family(family):
    if family.is_finite:
        return {'coefficients': list(family.coefficients)}
    return CoefficientFamilySerializer(family).data
