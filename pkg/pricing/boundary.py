"""
Free-boundary equations and the bracketed solver for the exercise level b.

The smooth-fit system reduces, after scaling by the barrier a, to a single
equation g(y) = 0 in y = b/a. The margin variant subtracts
k(lambda1 - lambda2) y^(lambda1 + lambda2).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root_scalar

from .exceptions import BracketFailureError, DomainError, MarginTooLargeError
from .models import CharacteristicRoots, LoanTerms, margin_bound
from .numerics import as_output, power

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class BoundarySolution:
    """Root y* of the scaled boundary equation and the exercise level b = a*y*."""

    y_star: float
    b: float
    iterations: int
    residual: float
    scale: float = 1.0
    converged: bool = True

    def __str__(self):
        return f"b={self.b:.6f} (y*={self.y_star:.6f}, {self.iterations} iterations)"


def eval_g_basic(y, roots: CharacteristicRoots, q_over_a: float):
    """(λ1−1)y^(λ1+1) − (q/a)λ1 y^λ1 + (1−λ2)y^(λ2+1) + (q/a)λ2 y^λ2."""
    l1, l2 = roots.lambda1, roots.lambda2
    y = np.asarray(y, dtype=float)
    value = (
        (l1 - 1.0) * power(y, l1 + 1.0)
        - q_over_a * l1 * power(y, l1)
        + (1.0 - l2) * power(y, l2 + 1.0)
        + q_over_a * l2 * power(y, l2)
    )
    return as_output(value)


def check_margin(roots: CharacteristicRoots, q_over_a: float, k: float):
    """Raise MarginTooLargeError unless 0 <= k <= h(q/a)."""
    if k == 0.0:
        return
    bound = margin_bound(roots, q_over_a)
    if k > bound:
        raise MarginTooLargeError(f"k={k:.12g} exceeds h(q/a)={bound:.12g}")


def _g_capped(y, roots, q_over_a, k):
    value = eval_g_basic(y, roots, q_over_a)
    if k == 0.0:
        return value
    l1, l2 = roots.lambda1, roots.lambda2
    return as_output(value - k * (l1 - l2) * power(np.asarray(y, dtype=float), l1 + l2))


def eval_g_capped(y, roots: CharacteristicRoots, q_over_a: float, k: float):
    check_margin(roots, q_over_a, k)
    return _g_capped(y, roots, q_over_a, k)


def solve_boundary(
    roots: CharacteristicRoots,
    terms: LoanTerms,
    *,
    max_iterations=200,
    residual_rtol=1e-12,
    expansion_cap_log2=60,
    left_offset=1e-12,
    degenerate_offset=1e-9,
) -> BoundarySolution:
    """Bisect g on (q/a, Y] where Y doubles until g(Y) > 0.

    With a = q the algebraic root y = 1 is skipped and the search starts at
    1 + ``degenerate_offset``.
    """
    q_over_a = terms.q_over_a
    k = terms.k
    check_margin(roots, q_over_a, k)

    def g(y):
        return _g_capped(y, roots, q_over_a, k)

    if q_over_a <= 1.0 + degenerate_offset:
        lo = 1.0 + degenerate_offset
    else:
        lo = q_over_a * (1.0 + left_offset)
    g_lo = g(lo)
    if not g_lo < 0:
        raise BracketFailureError(
            f"g({lo:.12g}) = {g_lo:.6g} ≥ 0: no sign change above q/a={q_over_a:.12g}"
        )

    cap = math.ldexp(q_over_a, expansion_cap_log2)
    hi = 2.0 * lo
    g_hi = g(hi)
    while not g_hi > 0:
        if not math.isfinite(g_hi) or hi > cap:
            raise BracketFailureError(
                f"no sign change of g on ({lo:.12g}, {min(hi, cap):.12g}]"
            )
        hi *= 2.0
        g_hi = g(hi)
    logger.debug("Boundary bracket [%.12g, %.12g], g(hi)=%.6g", lo, hi, g_hi)

    sol = root_scalar(
        g,
        method='bisect',
        bracket=(lo, hi),
        xtol=np.finfo(float).tiny,
        rtol=4 * EPS,
        maxiter=max_iterations,
    )
    y_star = float(sol.root)
    residual = abs(g(y_star))
    scale = abs(g_hi)
    if not sol.converged and residual > residual_rtol * scale:
        raise BracketFailureError(
            f"bisection stopped after {sol.iterations} iterations with |g|={residual:.6g}"
        )
    logger.debug(
        "Boundary y*=%.15g after %d iterations, |g|=%.3g (scale %.3g)",
        y_star,
        sol.iterations,
        residual,
        scale,
    )
    return BoundarySolution(
        y_star=y_star,
        b=terms.a * y_star,
        iterations=int(sol.iterations),
        residual=residual,
        scale=scale,
        converged=bool(sol.converged),
    )


def limit_boundary(roots: CharacteristicRoots, q: float) -> float:
    """Exercise level of the contract without termination clause, qλ1/(λ1−1)."""
    l1 = roots.lambda1
    if not l1 > 1:
        raise DomainError(f"λ1 > 1 required (λ1={l1})")
    return q * l1 / (l1 - 1.0)


def eval_gtilde(y, roots: CharacteristicRoots, q_over_a: float):
    """g̃(y) = y^(−λ2) g(y), convex on [q/a, ∞)."""
    l1, l2 = roots.lambda1, roots.lambda2
    y = np.asarray(y, dtype=float)
    value = (
        (l1 - 1.0) * power(y, l1 + 1.0 - l2)
        - q_over_a * l1 * power(y, l1 - l2)
        + (1.0 - l2) * y
        + q_over_a * l2
    )
    return as_output(value)


@dataclass
class ConvexityReport:
    grid: np.ndarray
    second_differences: np.ndarray
    left_value: float
    eps: float
    violations: list = field(default_factory=list)

    @property
    def convex(self):
        return not self.violations

    @property
    def left_negative(self):
        return self.left_value < 0

    @property
    def passed(self):
        return self.convex and self.left_negative

    @property
    def min_second_difference(self):
        if self.second_differences.size == 0:
            return math.nan
        return float(self.second_differences.min())


def gtilde_convexity_report(
    roots: CharacteristicRoots, q_over_a: float, grid=None, *, points=1000, eps=1e-8
) -> ConvexityReport:
    """Second differences of g̃ on ``grid`` (default ``[q/a, 10 q/a]``)."""
    if grid is None:
        grid = np.linspace(q_over_a, 10.0 * q_over_a, points)
    grid = np.asarray(grid, dtype=float)
    if grid.size and grid.min() < q_over_a * (1.0 - 1e-12):
        raise DomainError(f"convexity grid must lie in [q/a, ∞), got min {grid.min():.6g}")

    values = eval_gtilde(grid, roots, q_over_a)
    second = np.asarray(values[:-2] - 2.0 * values[1:-1] + values[2:]) if grid.size >= 3 else np.array([])
    bad = np.flatnonzero(second < -eps)
    violations = [(float(grid[i + 1]), float(second[i])) for i in bad]
    if violations:
        logger.warning("g̃ convexity violated at %d grid points", len(violations))
    return ConvexityReport(
        grid=grid,
        second_differences=second,
        left_value=eval_gtilde(q_over_a, roots, q_over_a),
        eps=eps,
        violations=violations,
    )
