"""
In-memory contract specification.

Nothing is persisted; a ContractSpec is what a contract document parses to
and what every ``stockloan`` command works on.
"""

from dataclasses import dataclass, field, replace

from pricing.exceptions import InvalidParameterError
from pricing.models import LoanTerms, MarketParams

VARIABLE_PARAMETERS = ('a', 's0', 'k', 'L')


@dataclass(frozen=True)
class ContractSpec:
    market: MarketParams
    terms: LoanTerms
    s0: float
    mc: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.s0 > 0:
            raise InvalidParameterError(f"S0 > 0 required (s0={self.s0})")

    def __str__(self):
        return f"{self.terms}; {self.market}; S0={self.s0:g}"

    def with_value(self, name, value):
        """Copy with one of ``a``, ``s0``, ``k`` or ``L`` replaced."""
        if name not in VARIABLE_PARAMETERS:
            raise ValueError(f"cannot vary {name!r}; choose one of {', '.join(VARIABLE_PARAMETERS)}")
        if name == 's0':
            return replace(self, s0=value)
        return replace(self, terms=replace(self.terms, **{name: value}))
