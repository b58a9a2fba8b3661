"""
Closed-form value functions of the stock loan.

On the continuation region (a, beta), beta = min(b, L), the value is a
combination of the two-sided exit transforms

    U(x) = E[e^(lambda*tau_beta) 1{tau_beta < tau_a}]
    D(x) = E[e^(lambda*tau_a) 1{tau_a < tau_beta}]

weighted by the exercise payoff beta - q and the margin payment k*a. Both
transforms are evaluated in the sinh kernel form, which stays finite when
sqrt(Delta) = 0 and never forms the large power coefficients explicitly.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import quad

from .boundary import check_margin, limit_boundary
from .exceptions import DomainError
from .models import CharacteristicRoots, LoanTerms
from .numerics import as_output, power, sinh_ratio, sinh_ratio_slope

logger = logging.getLogger(__name__)

EXIT_SERIES_TERMS = 50


class ValueKind(str, Enum):
    BASIC = 'Basic'
    CAP_ABOVE_B = 'CapAboveB'
    CAP_BELOW_B = 'CapBelowB'


class PayoffMode(str, Enum):
    """Evaluation of the capped value above L.

    ``PRINTED`` returns (L−q)(x/L)^λ2, the value of waiting for the price to
    fall back to L. ``EXERCISE_PAYOFF`` returns L−q, the stopped payoff.
    """

    PRINTED = 'printed'
    EXERCISE_PAYOFF = 'exercise-payoff'


def _up_transform(x, a, beta, roots):
    m, s = roots.mid, roots.half_gap
    return power(x / beta, m) * sinh_ratio(np.log(x / a), math.log(beta / a), s)


def _down_transform(x, a, beta, roots):
    m, s = roots.mid, roots.half_gap
    return power(x / a, m) * sinh_ratio(np.log(beta / x), math.log(beta / a), s)


def normalizer(a, beta, roots: CharacteristicRoots):
    """C(a, β) = (β/a)^(√Δ/σ) − (a/β)^(√Δ/σ)."""
    s = roots.half_gap
    return power(beta / a, s) - power(a / beta, s)


@dataclass(frozen=True)
class ValueFunction:
    """
    Piecewise value of a priced contract, immutable once built.

    ``beta`` is the right end of the continuation region (b or L). For
    ``CAP_ABOVE_B`` without a cap (margin-only contract) ``cap`` is ``inf``.
    ``coefficients`` are the power-basis weights (C1, C2) of x^λ1 and x^λ2 on
    the continuation region and ``c_ab`` the normalizer C(a, β); they are kept
    for reports, evaluation uses the kernel form.
    """

    kind: ValueKind
    terms: LoanTerms
    roots: CharacteristicRoots
    b: float
    beta: float
    cap: float
    mode: PayoffMode
    coefficients: tuple
    c_ab: float

    @classmethod
    def build(cls, terms, roots, b, mode=PayoffMode.PRINTED):
        a, q, k = terms.a, terms.q, terms.k
        if not b > a:
            raise DomainError(f"boundary b={b:.12g} must exceed a={a:.12g}")
        cap = terms.cap
        if terms.is_basic:
            kind = ValueKind.BASIC
        elif cap >= b:
            kind = ValueKind.CAP_ABOVE_B
        else:
            kind = ValueKind.CAP_BELOW_B
        beta = min(b, cap)

        s = roots.half_gap
        c_ab = normalizer(a, beta, roots)
        m = roots.mid
        if c_ab > 0:
            up = (beta - q) * power(beta, -m)
            down = k * a * power(a, -m)
            c1 = (up * power(a, -s) - down * power(beta, -s)) / c_ab
            c2 = (down * power(beta, s) - up * power(a, s)) / c_ab
        else:
            c1 = c2 = math.nan
        logger.debug("Built %s value function: b=%.12g beta=%.12g", kind.value, b, beta)
        return cls(
            kind=kind,
            terms=terms,
            roots=roots,
            b=float(b),
            beta=float(beta),
            cap=float(cap),
            mode=PayoffMode(mode),
            coefficients=(float(c1), float(c2)),
            c_ab=float(c_ab),
        )

    def interior(self, x):
        """Continuation-region formula, also evaluated at the closed ends."""
        a, q, k = self.terms.a, self.terms.q, self.terms.k
        x = np.asarray(x, dtype=float)
        value = (self.beta - q) * _up_transform(x, a, self.beta, self.roots)
        if k:
            value = value + k * a * _down_transform(x, a, self.beta, self.roots)
        return as_output(value)

    def interior_slope(self, x):
        """Exact derivative of :meth:`interior`."""
        a, q, k = self.terms.a, self.terms.q, self.terms.k
        m, s = self.roots.mid, self.roots.half_gap
        x = np.asarray(x, dtype=float)
        width = math.log(self.beta / a)
        up = power(x / self.beta, m)
        u = np.log(x / a)
        slope = (self.beta - q) * (
            m * up * sinh_ratio(u, width, s) + up * sinh_ratio_slope(u, width, s)
        ) / x
        if k:
            down = power(x / a, m)
            w = np.log(self.beta / x)
            slope = slope + k * a * (
                m * down * sinh_ratio(w, width, s) - down * sinh_ratio_slope(w, width, s)
            ) / x
        return as_output(slope)

    def above_cap(self, x):
        L, q = self.cap, self.terms.q
        x = np.asarray(x, dtype=float)
        if self.mode is PayoffMode.EXERCISE_PAYOFF:
            return as_output(np.full_like(x, L - q))
        return as_output((L - q) * power(x / L, self.roots.lambda2))

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0):
            raise DomainError("price must be nonnegative")
        a, q, k = self.terms.a, self.terms.q, self.terms.k
        out = np.empty_like(x)

        low = x <= a
        mid = (x > a) & (x < self.beta)
        high = x >= self.beta
        if self.kind is ValueKind.CAP_BELOW_B:
            capped = high
        else:
            capped = high & (x > self.cap)
        exercise = high & ~capped

        out[low] = k * x[low]
        if mid.any():
            out[mid] = self.interior(x[mid])
        out[exercise] = x[exercise] - q
        if capped.any():
            out[capped] = self.above_cap(x[capped])
        return float(out[0]) if scalar else out

    def region(self, x):
        if x <= self.terms.a:
            return 'terminated'
        if x < self.beta:
            return 'continuation'
        if x > self.cap or self.kind is ValueKind.CAP_BELOW_B:
            return 'above-cap'
        return 'exercise'

    def branch_mismatches(self):
        """Absolute gaps between adjacent branches at a, b∧L and L."""
        a, q, k = self.terms.a, self.terms.q, self.terms.k
        gaps = {
            'a': abs(self.interior(a) - k * a),
            'b': abs(self.interior(self.beta) - (self.beta - q)),
        }
        if math.isfinite(self.cap):
            gaps['L'] = abs(self.above_cap(self.cap) - (self.cap - q))
        return gaps

    def boundary_at_time(self, t):
        """Exercise threshold for the undiscounted price at time t, b·e^(γt)."""
        return self.beta * math.exp(self.terms.gamma * t)


def value_basic(x, terms: LoanTerms, roots: CharacteristicRoots, b: float):
    if not terms.is_basic:
        raise DomainError("value_basic prices contracts without cap and margin")
    return ValueFunction.build(terms, roots, b)(x)


def value_capped(x, terms: LoanTerms, roots: CharacteristicRoots, b: float, mode=PayoffMode.PRINTED):
    check_margin(roots, terms.q_over_a, terms.k)
    return ValueFunction.build(terms, roots, b, mode=mode)(x)


def hitting_expectation(x, a, b, roots: CharacteristicRoots):
    """E[e^(λτ_b) 1{τ_b < τ_a}] for the discounted price started at x."""
    x_arr = np.asarray(x, dtype=float)
    if not 0 < a < b:
        raise DomainError(f"0 < a < b required (a={a}, b={b})")
    if np.any((x_arr <= a) | (x_arr >= b)):
        raise DomainError(f"x must lie in ({a:.12g}, {b:.12g})")
    return as_output(_up_transform(x_arr, a, b, roots))


def value_at_time(t, s_t, value_fn: ValueFunction):
    """V_t = e^(γt) f(e^(−γt) S_t)."""
    growth = math.exp(value_fn.terms.gamma * t)
    return as_output(growth * np.asarray(value_fn(np.asarray(s_t, dtype=float) / growth)))


def default_step(x, q):
    return max(1e-4 * x, 1e-7 * q)


def ode_residual(value_fn: ValueFunction, x, step=None):
    """½σ²x²f″ + (r̃−δ)xf′ − r̃f by central differences at an interior x."""
    roots = value_fn.roots
    h = default_step(x, value_fn.terms.q) if step is None else step
    if x - 3 * h <= value_fn.terms.a or x + 3 * h >= value_fn.beta:
        raise DomainError(
            f"stencil around x={x:.12g} (h={h:.3g}) leaves ({value_fn.terms.a:.12g}, {value_fn.beta:.12g})"
        )
    f_lo, f_mid, f_hi = value_fn.interior(np.array([x - h, x, x + h]))
    d1 = (f_hi - f_lo) / (2 * h)
    d2 = (f_hi - 2 * f_mid + f_lo) / (h * h)
    r_tilde = roots.r_tilde
    return 0.5 * roots.sigma**2 * x * x * d2 + (r_tilde - roots.dividend) * x * d1 - r_tilde * f_mid


def smooth_fit_slope(value_fn: ValueFunction):
    """f′ at (b∧L)⁻ from the continuation-region formula."""
    return value_fn.interior_slope(value_fn.beta)


def exercise_generator(x, roots: CharacteristicRoots, q):
    """δx − r̃q; the pricing operator applied to x − q equals its negative."""
    return as_output(roots.dividend * np.asarray(x, dtype=float) - roots.r_tilde * q)


def limit_value(x, roots: CharacteristicRoots, q):
    """Value without a termination clause: exercise at b(0) = qλ1/(λ1−1)."""
    b0 = limit_boundary(roots, q)
    x = np.asarray(x, dtype=float)
    value = np.where(x >= b0, x - q, (b0 - q) * power(np.maximum(x, 0.0) / b0, roots.lambda1))
    return as_output(value)


def exit_time_density(t, a1, b1, mu, n_terms=EXIT_SERIES_TERMS):
    """
    Density of the first hit of b1 before a1 for W_t + mu*t started at 0.

    Image series truncated to n = -N..N; terms decay like
    exp(-(2N(b1-a1))^2 / 2t).
    """
    if not a1 < 0 < b1:
        raise DomainError(f"a1 < 0 < b1 required (a1={a1}, b1={b1})")
    t = np.asarray(t, dtype=float)
    n = np.arange(-n_terms, n_terms + 1, dtype=float)
    shifted = 2.0 * n * (b1 - a1) + b1
    tt = np.where(t > 0, t, 1.0)[..., None]
    with np.errstate(under='ignore'):
        series = np.sum(shifted * np.exp(-(shifted**2) / (2.0 * tt)), axis=-1)
        weight = np.exp(mu * b1 - 0.5 * mu * mu * tt[..., 0]) / np.sqrt(2.0 * np.pi * tt[..., 0] ** 3)
    return as_output(np.where(t > 0, weight * series, 0.0))


def laplace_quadrature(x, a, b, roots: CharacteristicRoots, sigma=None, n_terms=EXIT_SERIES_TERMS):
    """∫₀^∞ e^(λt) · exit_time_density dt, the quadrature counterpart of U(x)."""
    sigma = roots.sigma if sigma is None else sigma
    a1 = math.log(a / x) / sigma
    b1 = math.log(b / x) / sigma
    # e^(λt) times the density with drift μ is, up to a constant, the
    # density with drift ±√Δ; the integrand then stays bounded on [0, ∞).
    mu = roots.mu
    tilted = math.copysign(roots.sqrt_disc, mu)
    scale = math.exp((mu - tilted) * b1)

    def integrand(t):
        return scale * exit_time_density(t, a1, b1, tilted, n_terms)

    # Split at a multiple of the diffusive time scale of the strip.
    split = 10.0 * (b1 - a1) ** 2
    head, _ = quad(integrand, 0.0, split, limit=400, epsabs=1e-12, epsrel=1e-10)
    tail, _ = quad(integrand, split, np.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
    return head + tail
