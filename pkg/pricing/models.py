"""
Parameter containers for the stock loan engine.

Holds the market and contract terms, the admissibility regimes under which
the perpetual problem is well posed, and the characteristic roots of the
pricing operator that every closed form is built from.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .exceptions import (
    DomainError,
    InadmissibleParametersError,
    InvalidParameterError,
    NegativeDiscriminantError,
)
from .numerics import as_output, power


def _require(condition, message):
    if not condition:
        raise InvalidParameterError(message)


def _finite(name, value):
    _require(value is not None and math.isfinite(value), f"{name} must be a finite number")


@dataclass(frozen=True)
class MarketParams:
    """
    Black-Scholes market for the collateral share.

    Rates are per year, continuously compounded; volatility is per sqrt(year).
    """

    r: float
    sigma: float
    delta: float = 0.0

    def __post_init__(self):
        for name in ('r', 'sigma', 'delta'):
            _finite(name, getattr(self, name))
        _require(self.r > 0, f"r > 0 required (r={self.r})")
        _require(self.sigma > 0, f"σ > 0 required (sigma={self.sigma})")
        _require(self.delta >= 0, f"δ ≥ 0 required (delta={self.delta})")

    def __str__(self):
        return f"r={self.r:g}, σ={self.sigma:g}, δ={self.delta:g}"


@dataclass(frozen=True)
class LoanTerms:
    """
    Contract terms negotiated between the bank and the client.

    ``a`` is the termination barrier on the discounted price, ``L`` the
    optional cap (``None`` means no cap) and ``k`` the margin fraction paid
    back to the client when the barrier triggers.
    """

    q: float
    gamma: float
    a: float
    L: float | None = None
    k: float = 0.0

    def __post_init__(self):
        for name in ('q', 'gamma', 'a', 'k'):
            _finite(name, getattr(self, name))
        _require(self.q > 0, f"q > 0 required (q={self.q})")
        _require(0 < self.a <= self.q, f"0 < a ≤ q required (a={self.a}, q={self.q})")
        if self.L is not None:
            _finite('L', self.L)
            _require(self.q < self.L, f"q < L required (q={self.q}, L={self.L})")
        _require(0 <= self.k < 1, f"0 ≤ k < 1 required (k={self.k})")

    def __str__(self):
        cap = f", L={self.L:g}" if self.L is not None else ""
        return f"q={self.q:g}, γ={self.gamma:g}, a={self.a:g}{cap}, k={self.k:g}"

    @property
    def q_over_a(self):
        return self.q / self.a

    @property
    def cap(self):
        """Cap level, ``inf`` when the contract has none."""
        return math.inf if self.L is None else self.L

    @property
    def is_basic(self):
        """True for the plain termination-clause contract (no cap, no margin)."""
        return self.L is None and self.k == 0.0

    def with_barrier(self, a):
        return replace(self, a=a)


class RegimeTag(str, Enum):
    POSITIVE_DIVIDEND = 'PositiveDividend'
    ZERO_DIVIDEND = 'ZeroDividend'
    INADMISSIBLE = 'Inadmissible'


@dataclass(frozen=True)
class ParameterRegime:
    tag: RegimeTag
    detail: str

    @property
    def admissible(self):
        return self.tag is not RegimeTag.INADMISSIBLE

    def __str__(self):
        return f"{self.tag.value}: {self.detail}"


@dataclass(frozen=True)
class CharacteristicRoots:
    """
    Exponents of the power solutions ``x**lambda`` of
    ``0.5*sigma^2*x^2*f'' + (r~ - delta)*x*f' - r~*f = 0`` with ``r~ = r - gamma``.

    ``lam`` is ``gamma - r``; ``delta_disc`` is ``mu^2 - 2*lam``. The market
    volatility and dividend yield travel with the roots so the pricing
    operator can be applied without the original MarketParams.
    """

    mu: float
    lam: float
    delta_disc: float
    sqrt_disc: float
    lambda1: float
    lambda2: float
    sigma: float
    dividend: float
    regime: RegimeTag = RegimeTag.POSITIVE_DIVIDEND

    @property
    def mid(self):
        """``(lambda1 + lambda2) / 2``, equal to ``-mu/sigma``."""
        return 0.5 * (self.lambda1 + self.lambda2)

    @property
    def half_gap(self):
        """``(lambda1 - lambda2) / 2``, equal to ``sqrt(delta_disc)/sigma``."""
        return 0.5 * (self.lambda1 - self.lambda2)

    @property
    def r_tilde(self):
        return -self.lam


def _classify(m, gamma, permissive=False):
    lam = gamma - m.r
    if m.delta > 0:
        if permissive:
            return ParameterRegime(RegimeTag.POSITIVE_DIVIDEND, "δ>0 (permissive cap-and-margin wording)")
        if lam + m.delta >= 0:
            return ParameterRegime(RegimeTag.POSITIVE_DIVIDEND, f"δ>0 and γ−r+δ={lam + m.delta:.6g}≥0")
        return ParameterRegime(
            RegimeTag.INADMISSIBLE, f"γ−r+δ≥0 fails: γ−r+δ={lam + m.delta:.6g}"
        )
    half_var = 0.5 * m.sigma * m.sigma
    if lam > half_var:
        return ParameterRegime(RegimeTag.ZERO_DIVIDEND, f"δ=0 and γ−r={lam:.6g}>σ²/2={half_var:.6g}")
    return ParameterRegime(
        RegimeTag.INADMISSIBLE, f"γ−r>σ²/2 fails: γ−r={lam:.6g} ≤ σ²/2={half_var:.6g}"
    )


def classify_regime(m: MarketParams, t: LoanTerms, *, permissive=False) -> ParameterRegime:
    """Tag the (market, loan) pair as PositiveDividend, ZeroDividend or Inadmissible.

    ``permissive`` applies the weaker cap-and-margin hypothesis (any ``delta > 0``).
    """
    return _classify(m, t.gamma, permissive)


def compute_roots(m: MarketParams, gamma: float, *, permissive=False) -> CharacteristicRoots:
    regime = _classify(m, gamma, permissive)
    if not regime.admissible:
        raise InadmissibleParametersError(regime.detail)

    lam = gamma - m.r
    mu = -(0.5 * m.sigma + (lam + m.delta) / m.sigma)
    disc = mu * mu - 2.0 * lam
    if disc < 0:
        raise NegativeDiscriminantError(f"μ²−2λ={disc:.6g} < 0")
    sqrt_disc = math.sqrt(disc)
    product = 2.0 * lam / (m.sigma * m.sigma)

    if regime.tag is RegimeTag.ZERO_DIVIDEND:
        lambda1, lambda2 = product, 1.0
    else:
        lambda1 = (-mu + sqrt_disc) / m.sigma
        # Vieta form avoids the cancellation in (-mu - sqrt_disc).
        lambda2 = product / lambda1

    return CharacteristicRoots(
        mu=mu,
        lam=lam,
        delta_disc=disc,
        sqrt_disc=sqrt_disc,
        lambda1=lambda1,
        lambda2=lambda2,
        sigma=m.sigma,
        dividend=m.delta,
        regime=regime.tag,
    )


def margin_bound(roots: CharacteristicRoots, q_over_a: float, y=None):
    """Evaluate the margin bound h at ``y`` (default ``q/a``).

    Contracts are priceable with margin ``k`` only for ``0 <= k <= h(q/a)``.
    """
    if q_over_a < 1:
        raise DomainError(f"q/a ≥ 1 required (q/a={q_over_a})")
    l1, l2 = roots.lambda1, roots.lambda2
    if l1 == 1.0:
        raise DomainError("λ1 = 1 makes the margin bound undefined")
    y = q_over_a if y is None else np.asarray(y, dtype=float)
    value = (
        (l1 + 1.0 - l2) / l1 * power(y, 1.0 - l2)
        - q_over_a * (l1 - 1.0 - l2) / (l1 - 1.0) * power(y, -l2)
    )
    return as_output(value)
