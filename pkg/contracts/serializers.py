"""
Django REST Framework serializers for contract documents and quotes.

Contract documents are flat ``dotted.key = value`` files; once nested they
are validated here. Schema problems (unknown or missing keys, values that
are not numbers) are reported as serializer errors. Economic invariants
(a ≤ q, σ > 0, ...) are left to the pricing dataclasses.
"""

from collections.abc import Mapping

from rest_framework import serializers

from pricing.models import LoanTerms, MarketParams

from .models import ContractSpec


class StrictFieldsMixin:
    """Reject keys that are not declared fields."""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class MarketSerializer(StrictFieldsMixin, serializers.Serializer):
    """Market section: ``market.r``, ``market.sigma``, ``market.delta``."""

    r = serializers.FloatField()
    sigma = serializers.FloatField()
    delta = serializers.FloatField()


class LoanSerializer(StrictFieldsMixin, serializers.Serializer):
    """Loan section; ``L`` and ``k`` are optional."""

    q = serializers.FloatField()
    gamma = serializers.FloatField()
    a = serializers.FloatField()
    L = serializers.FloatField(required=False, allow_null=True, default=None)
    k = serializers.FloatField(required=False, default=0.0)


class SimulationSerializer(StrictFieldsMixin, serializers.Serializer):
    """Optional Monte Carlo overrides (``mc.*``)."""

    n_paths = serializers.IntegerField(required=False, min_value=1)
    dt = serializers.FloatField(required=False)
    horizon = serializers.FloatField(required=False)
    seed = serializers.IntegerField(required=False, min_value=0, max_value=2**64 - 1)
    bridge_correction = serializers.BooleanField(required=False)

    def validate_dt(self, value):
        if value <= 0:
            raise serializers.ValidationError("Time step must be positive.")
        return value

    def validate_horizon(self, value):
        if value <= 0:
            raise serializers.ValidationError("Horizon must be positive.")
        return value


class ContractSpecSerializer(StrictFieldsMixin, serializers.Serializer):
    market = MarketSerializer()
    loan = LoanSerializer(source='terms')
    s0 = serializers.FloatField()
    mc = SimulationSerializer(required=False)

    def create(self, validated_data):
        # Dataclass validation raises InvalidParameterError on bad economics.
        return ContractSpec(
            market=MarketParams(**validated_data['market']),
            terms=LoanTerms(**validated_data['terms']),
            s0=validated_data['s0'],
            mc=dict(validated_data.get('mc', {})),
        )


class FeeQuoteSerializer(serializers.Serializer):
    """Read-only rendering of a fee quote."""

    case = serializers.CharField(source='case.value')
    c = serializers.FloatField()
    b = serializers.FloatField()
    s0 = serializers.FloatField()
    value = serializers.FloatField()
    initial_cash = serializers.FloatField()


class ContractQuoteSerializer(serializers.Serializer):
    """Audit view of a negotiation outcome.

    ``coefficients`` are the weights (C1, C2) of x^λ1 and x^λ2 on the
    continuation region.
    """

    regime = serializers.CharField(source='regime.tag.value')
    lambda1 = serializers.FloatField(source='roots.lambda1', default=None)
    lambda2 = serializers.FloatField(source='roots.lambda2', default=None)
    b = serializers.FloatField(source='boundary.b', default=None)
    iterations = serializers.IntegerField(source='boundary.iterations', default=None)
    kind = serializers.CharField(source='value_fn.kind.value', default=None)
    coefficients = serializers.ListField(
        source='value_fn.coefficients', child=serializers.FloatField(), default=None
    )
    fee = FeeQuoteSerializer(allow_null=True)
    diagnostics = serializers.ListField(child=serializers.DictField())
