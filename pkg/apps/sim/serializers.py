import math

from rest_framework import serializers

from apps.core.exceptions import DomainError
from apps.families.serializers import dump_family
from .domain import TABLE, CoordinateCDF, DesignKind, DesignModel

REPORT_COLUMNS = (
    'family', 'd', 'sigma', 's', 'kappa', 'm', 'n', 'r_n', 'N', 'C', 'u_n', 'H', 'mode',
    'reps', 'rejections', 'rate', 'ci_lo', 'ci_hi', 'predicted', 'seed',
)


class CoordinateCDFSerializer(serializers.Serializer):
    """A named scipy.stats distribution with parameters, or a piecewise-linear table"""

    distribution = serializers.CharField(default='uniform')
    params = serializers.DictField(child=serializers.FloatField(), required=False, default=dict)
    knots = serializers.ListField(child=serializers.FloatField(), required=False)
    levels = serializers.ListField(child=serializers.FloatField(), required=False)

    def validate(self, attrs):
        try:
            attrs['cdf'] = self._build(attrs)
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    @staticmethod
    def _build(attrs):
        if attrs['distribution'] == TABLE:
            return CoordinateCDF.table(attrs.get('knots'), attrs.get('levels'))
        return CoordinateCDF.named(attrs['distribution'], **attrs.get('params', {}))

    def create(self, validated_data):
        return validated_data['cdf']

    def to_representation(self, instance):
        if instance.is_table:
            return {'distribution': TABLE, 'knots': instance.knots.tolist(), 'levels': instance.levels.tolist()}
        return {'distribution': instance.distribution, 'params': dict(instance.params)}


class DesignModelSerializer(serializers.Serializer):
    """Serializer for DesignModel"""

    kind = serializers.ChoiceField(choices=DesignKind.choices, default=DesignKind.UNIFORM)
    cdfs = CoordinateCDFSerializer(many=True, required=False, default=list)

    def validate(self, attrs):
        attrs['cdfs'] = tuple(item['cdf'] for item in attrs.get('cdfs', ()))
        try:
            DesignModel(**attrs)
        except DomainError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def create(self, validated_data):
        return DesignModel(**validated_data)

    def to_representation(self, instance):
        return {
            'kind': instance.kind.value,
            'cdfs': [CoordinateCDFSerializer(cdf).data for cdf in instance.cdfs],
        }


def load_design(data):
    """Build a design model from its JSON object, raising DomainError on bad input"""
    serializer = DesignModelSerializer(data=data)
    if not serializer.is_valid():
        raise DomainError(f"Invalid design model: {dict(serializer.errors)}")
    return serializer.save()


class MonteCarloReportSerializer(serializers.Serializer):
    """Serializer for MonteCarloReport"""

    family = serializers.SerializerMethodField()
    mode = serializers.CharField()
    n = serializers.IntegerField(allow_null=True)
    r_n = serializers.FloatField(source='radius', allow_null=True)
    N = serializers.IntegerField(source='index_count', allow_null=True)
    C = serializers.SerializerMethodField()
    u_n = serializers.FloatField(allow_null=True)
    H = serializers.FloatField(source='threshold', allow_null=True)
    replications = serializers.IntegerField()
    rejections = serializers.IntegerField()
    empirical_rate = serializers.FloatField()
    wilson_ci = serializers.ListField(child=serializers.FloatField())
    predicted = serializers.FloatField(allow_null=True)
    mean_statistic = serializers.FloatField(allow_null=True)
    seed = serializers.IntegerField()
    runtime = serializers.FloatField()

    def get_family(self, obj):
        return dump_family(obj.family) if obj.family is not None else None

    def get_C(self, obj):
        if obj.cutoff is None or math.isinf(obj.cutoff):
            return None
        return obj.cutoff


def report_row(report):
    """One sweep-table row in REPORT_COLUMNS order"""
    family = report.family
    if family is None:
        label = None
    elif family.is_finite:
        label = 'finite'
    else:
        label = family.variant.value
    cutoff = None if report.cutoff is None or math.isinf(report.cutoff) else report.cutoff
    lo, hi = report.wilson_ci
    values = (
        label,
        getattr(family, 'd', None),
        getattr(family, 'sigma', None),
        getattr(family, 's', None),
        getattr(family, 'kappa', None),
        getattr(family, 'm', None),
        report.n,
        report.radius,
        report.index_count,
        cutoff,
        report.u_n,
        report.threshold,
        report.mode,
        report.replications,
        report.rejections,
        report.empirical_rate,
        lo,
        hi,
        report.predicted,
        report.seed,
    )
    return dict(zip(REPORT_COLUMNS, values))
