import math

from rest_framework import serializers

from apps.families.serializers import dump_family
from .services import test_weights


class ExtremalSolutionSerializer(serializers.Serializer):
    """
    Serializer for ExtremalSolution

    An infinite cutoff (finite family with a slack norm constraint) is
    written as null.
    """

    family = serializers.SerializerMethodField()
    n = serializers.IntegerField(source='problem.n')
    r = serializers.FloatField(source='problem.r')
    b = serializers.FloatField(source='problem.b')
    B = serializers.FloatField(source='problem.B')
    C = serializers.SerializerMethodField()
    N = serializers.IntegerField(source='index_set.size')
    z0_sq = serializers.FloatField(source='level')
    u_sq = serializers.FloatField(source='u_squared')
    u = serializers.FloatField()
    I0 = serializers.FloatField()
    I1 = serializers.FloatField()
    I2 = serializers.FloatField()
    second_constraint_active = serializers.BooleanField()
    residuals = serializers.DictField(child=serializers.FloatField())
    weights = serializers.SerializerMethodField()

    def get_family(self, obj):
        return dump_family(obj.problem.family)

    def get_C(self, obj):
        return None if math.isinf(obj.cutoff) else obj.cutoff

    def get_weights(self, obj):
        normalized = test_weights(obj).values if obj.u_squared > 0 else [0.0] * obj.index_set.size
        return [
            {'index': [int(e) for e in index], 'c': float(c), 'v_sq': float(v), 'w': float(w)}
            for index, c, v, w in zip(obj.index_set.indices, obj.coefficients, obj.v_squared, normalized)
        ]
