"""
Fair service fee and the three-step negotiation between bank and client.

The client pays c upfront, receives q and keeps the option to redeem the
share; the fee is fair when S0 - q + c equals the contract value f(S0).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import root_scalar

from .boundary import BoundarySolution, solve_boundary
from .exceptions import (
    InadmissibleParametersError,
    MonotonicityViolationError,
    NegativeFeeError,
    OutOfRangeError,
    StockLoanError,
)
from .models import (
    CharacteristicRoots,
    LoanTerms,
    MarketParams,
    ParameterRegime,
    classify_regime,
    compute_roots,
)
from .valuation import PayoffMode, ValueFunction

logger = logging.getLogger(__name__)


class FeeCase(str, Enum):
    TERMINATED_AT_START = 'TerminatedAtStart'
    IMMEDIATE_EXERCISE = 'ImmediateExercise'
    ACTIVE = 'Active'


@dataclass(frozen=True)
class FeeQuote:
    case: FeeCase
    c: float
    b: float
    s0: float
    value: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def initial_cash(self):
        """Cash the client walks away with, q − c."""
        return self.diagnostics['q'] - self.c

    def __str__(self):
        return f"c = {self.c:.6f}, case={self.case.value}"


@dataclass
class ContractQuote:
    """Outcome of a negotiation, including every intermediate quantity for audit."""

    market: MarketParams
    terms: LoanTerms
    s0: float
    regime: ParameterRegime
    roots: CharacteristicRoots | None = None
    boundary: BoundarySolution | None = None
    value_fn: ValueFunction | None = None
    fee: FeeQuote | None = None
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self):
        return self.fee is not None and not self.diagnostics


def _echo(s0, m, t, regime):
    return {
        's0': s0,
        'r': m.r,
        'sigma': m.sigma,
        'delta': m.delta,
        'q': t.q,
        'gamma': t.gamma,
        'a': t.a,
        'L': t.L,
        'k': t.k,
        'regime': regime.tag.value,
    }


def _quote(s0, t, value_fn, echo):
    if s0 <= t.a:
        return FeeQuote(
            case=FeeCase.TERMINATED_AT_START,
            c=t.k * s0 + t.q - s0,
            b=value_fn.b if value_fn is not None else np.nan,
            s0=s0,
            value=t.k * s0,
            diagnostics=echo,
        )
    value = value_fn(s0)
    if s0 >= value_fn.beta:
        return FeeQuote(
            case=FeeCase.IMMEDIATE_EXERCISE, c=0.0, b=value_fn.b, s0=s0, value=value, diagnostics=echo
        )
    c = value - s0 + t.q
    if c < 0:
        raise NegativeFeeError(f"fair fee c={c:.12g} < 0 at S0={s0:.12g}")
    return FeeQuote(case=FeeCase.ACTIVE, c=c, b=value_fn.b, s0=s0, value=value, diagnostics=echo)


def price_contract(m, t, *, mode=PayoffMode.PRINTED, permissive=False, solver_options=None):
    """Roots, boundary and value function for a (market, terms) pair."""
    roots = compute_roots(m, t.gamma, permissive=permissive)
    solution = solve_boundary(roots, t, **(solver_options or {}))
    return roots, solution, ValueFunction.build(t, roots, solution.b, mode=mode)


def fair_fee(
    s0: float,
    m: MarketParams,
    t: LoanTerms,
    *,
    mode=PayoffMode.PRINTED,
    permissive=False,
    solver_options=None,
) -> FeeQuote:
    regime = classify_regime(m, t, permissive=permissive)
    if not regime.admissible:
        raise InadmissibleParametersError(regime.detail)
    echo = _echo(s0, m, t, regime)
    if s0 <= t.a:
        # Terminated before any transaction; no boundary is needed.
        return _quote(s0, t, None, echo)
    _, _, value_fn = price_contract(
        m, t, mode=mode, permissive=permissive, solver_options=solver_options
    )
    return _quote(s0, t, value_fn, echo)


def negotiate(
    draft: LoanTerms,
    m: MarketParams,
    s0: float,
    *,
    mode=PayoffMode.PRINTED,
    permissive=False,
    solver_options=None,
) -> ContractQuote:
    """
    Run the negotiation steps and return the full quote.

    Step 1 accepts the draft terms (q, γ, a, L, k), step 2 solves for the
    exercise boundary and step 3 sets the fee. Engine errors are recorded in
    ``diagnostics`` instead of being raised.
    """
    regime = classify_regime(m, draft, permissive=permissive)
    quote = ContractQuote(market=m, terms=draft, s0=s0, regime=regime)
    if not regime.admissible:
        quote.diagnostics.append(InadmissibleParametersError(regime.detail).as_diagnostic())
        logger.info("Negotiation stopped: %s", regime.detail)
        return quote

    try:
        quote.roots = compute_roots(m, draft.gamma, permissive=permissive)
        quote.boundary = solve_boundary(quote.roots, draft, **(solver_options or {}))
        quote.value_fn = ValueFunction.build(draft, quote.roots, quote.boundary.b, mode=mode)
    except StockLoanError as exc:
        quote.diagnostics.append(exc.as_diagnostic())
        logger.info("Negotiation step 2 failed: %s", exc)

    echo = _echo(s0, m, draft, regime)
    if quote.value_fn is None and s0 > draft.a:
        return quote
    try:
        quote.fee = _quote(s0, draft, quote.value_fn, echo)
    except StockLoanError as exc:
        quote.diagnostics.append(exc.as_diagnostic())
        logger.info("Negotiation step 3 failed: %s", exc)
    return quote


def implied_barrier(
    target_c: float,
    m: MarketParams,
    t: LoanTerms,
    s0: float,
    *,
    permissive=False,
    max_iterations=200,
) -> float:
    """
    Barrier a whose fair fee equals ``target_c``; ``t.a`` is ignored.

    Bisects on a over [1e-6 q, min(q, S0)(1 - 1e-6)] after checking that the
    fee is nonincreasing between the endpoints.
    """
    q = t.q
    a_lo = 1e-6 * q
    a_hi = min(q, s0) * (1.0 - 1e-6)

    def fee(a):
        return fair_fee(s0, m, t.with_barrier(a), permissive=permissive).c

    c_lo, c_hi = fee(a_lo), fee(a_hi)
    if c_lo < c_hi:
        raise MonotonicityViolationError(
            f"c(a={a_lo:.6g})={c_lo:.12g} < c(a={a_hi:.6g})={c_hi:.12g}"
        )
    if not c_hi <= target_c <= c_lo:
        raise OutOfRangeError(
            f"target fee {target_c:.12g} outside achievable [{c_hi:.12g}, {c_lo:.12g}]"
        )

    sol = root_scalar(
        lambda a: fee(a) - target_c,
        method='bisect',
        bracket=(a_lo, a_hi),
        xtol=1e-12 * q,
        rtol=4 * np.finfo(float).eps,
        maxiter=max_iterations,
    )
    a_star = float(sol.root)
    logger.debug("Implied barrier a=%.12g after %d iterations", a_star, sol.iterations)
    return a_star
