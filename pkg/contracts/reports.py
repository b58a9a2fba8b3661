"""
Sweep tables and verification reports built on the pricing app.

These builders are the only domain-facing code that reads engine defaults
from ``settings.STOCKLOAN``.
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from django.conf import settings

from pricing.boundary import gtilde_convexity_report
from pricing.exceptions import StockLoanError
from pricing.fees import negotiate, price_contract
from pricing.montecarlo import (
    SimConfig,
    StoppingRule,
    estimate_cap_reentry,
    estimate_hitting_laplace,
    estimate_rule_value,
)
from pricing.valuation import (
    PayoffMode,
    ValueKind,
    default_step,
    exercise_generator,
    hitting_expectation,
    laplace_quadrature,
    limit_value,
    ode_residual,
    smooth_fit_slope,
)

from .documents import ContractDocumentError

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['case', 'b', 'f_s0', 'c', 'q_minus_c', 'q_minus_c_no_clause']

# Expected comparative statics per varied parameter.
EXPECTED_TRENDS = {
    'a': {'b': 'nonincreasing', 'f_s0': 'nonincreasing', 'c': 'nonincreasing'},
    's0': {'q_minus_c': 'nondecreasing'},
    'k': {'b': 'nondecreasing', 'f_s0': 'nondecreasing'},
    'L': {'f_s0': 'nondecreasing'},
}


def engine_settings(section):
    return settings.STOCKLOAN[section]


def build_sim_config(spec, *, seed=None, n_paths=None, dt=None):
    """
    SimConfig for a contract: flags override ``STOCKLOAN_SEED``, which
    overrides the document's ``mc.*`` keys, which override settings.
    """
    defaults = engine_settings('MC')
    doc = spec.mc
    if seed is None:
        env_seed = os.getenv(settings.STOCKLOAN['SEED_ENV_VAR'])
        if env_seed:
            try:
                seed = int(env_seed)
            except ValueError as exc:
                raise ContractDocumentError(f"STOCKLOAN_SEED must be an integer, got {env_seed!r}") from exc
    return SimConfig(
        n_paths=n_paths if n_paths is not None else doc.get('n_paths', defaults['N_PATHS']),
        dt=dt if dt is not None else doc.get('dt', defaults['DT']),
        horizon=doc.get('horizon', defaults['HORIZON']),
        seed=seed if seed is not None else doc.get('seed', defaults['SEED']),
        bridge_correction=doc.get('bridge_correction', defaults['BRIDGE_CORRECTION']),
        block_size=defaults['BLOCK_SIZE'],
        workers=defaults['WORKERS'],
        censor_warning_ratio=defaults['CENSOR_WARNING_RATIO'],
    )


def solver_options():
    solver = engine_settings('SOLVER')
    return {
        'max_iterations': solver['MAX_ITERATIONS'],
        'residual_rtol': solver['RESIDUAL_RTOL'],
        'expansion_cap_log2': solver['EXPANSION_CAP_LOG2'],
        'left_offset': solver['LEFT_OFFSET'],
        'degenerate_offset': solver['DEGENERATE_OFFSET'],
    }


def parse_range(text):
    """``lo:hi:n`` to an evenly spaced grid."""
    try:
        lo, hi, n = text.split(':')
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError as exc:
        raise ContractDocumentError(f"range must look like lo:hi:n, got {text!r}") from exc
    if n < 1 or not (math.isfinite(lo) and math.isfinite(hi)):
        raise ContractDocumentError(f"range needs finite ends and n ≥ 1, got {text!r}")
    return np.linspace(lo, hi, n)


def run_sweep(spec, vary, values, *, mode=PayoffMode.PRINTED, permissive=False):
    """One negotiation per value of ``vary``; failed rows carry NaNs and the error code."""
    rows = []
    for value in values:
        row = {vary: float(value)}
        row.update({column: math.nan for column in SWEEP_COLUMNS})
        try:
            point = spec.with_value(vary, float(value))
        except StockLoanError as exc:
            row['case'] = exc.code
            rows.append(row)
            continue

        quote = negotiate(
            point.terms,
            point.market,
            point.s0,
            mode=mode,
            permissive=permissive,
            solver_options=solver_options(),
        )
        if quote.boundary is not None:
            row['b'] = quote.boundary.b
        if quote.fee is not None:
            fee = quote.fee
            row.update(case=fee.case.value, f_s0=fee.value, c=fee.c, q_minus_c=fee.initial_cash)
        else:
            row['case'] = quote.diagnostics[0]['error'] if quote.diagnostics else 'unpriced'
        if quote.roots is not None:
            no_clause = limit_value(point.s0, quote.roots, point.terms.q)
            row['q_minus_c_no_clause'] = point.terms.q - (no_clause - point.s0 + point.terms.q)
        rows.append(row)
    frame = pd.DataFrame(rows, columns=[vary, *SWEEP_COLUMNS])
    logger.debug("Sweep over %s: %d rows", vary, len(frame))
    return frame


def trend(series):
    clean = series.dropna()
    if len(clean) < 2:
        return 'undetermined'
    if clean.is_monotonic_decreasing and clean.is_monotonic_increasing:
        return 'constant'
    if clean.is_monotonic_decreasing:
        return 'nonincreasing'
    if clean.is_monotonic_increasing:
        return 'nondecreasing'
    return 'non-monotone'


def monotonicity_summary(frame, vary):
    """Observed trend of each sweep column against the expected direction."""
    expected = EXPECTED_TRENDS.get(vary, {})
    summary = []
    for column in ('b', 'f_s0', 'c', 'q_minus_c'):
        observed = trend(frame[column])
        wanted = expected.get(column)
        ok = None if wanted is None else observed in (wanted, 'constant')
        summary.append({'column': column, 'observed': observed, 'expected': wanted, 'ok': ok})
    return summary


def write_csv(frame, target=None):
    """Locale-independent CSV with header; returns the text when ``target`` is None."""
    return frame.to_csv(target, index=False, float_format='%.12g', lineterminator='\n')


@dataclass
class CheckResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    informational: bool = False

    def lines(self):
        yield f"check.{self.name}.passed={'true' if self.passed else 'false'}"
        for key, value in self.metrics.items():
            if isinstance(value, (bool, np.bool_)):
                value = 'true' if value else 'false'
            elif isinstance(value, float):
                value = f"{value:.12g}"
            yield f"check.{self.name}.{key}={value}"


@dataclass
class VerificationReport:
    b: float
    kind: str
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    @property
    def failures(self):
        return [check.name for check in self.checks if not check.passed]

    def lines(self):
        yield f"verify.b={self.b:.12g}"
        yield f"verify.kind={self.kind}"
        for check in self.checks:
            yield from check.lines()
        yield f"verify.passed={'true' if self.passed else 'false'}"


def _ode_check(value_fn, limits):
    a, beta, q = value_fn.terms.a, value_fn.beta, value_fn.terms.q
    grid = np.linspace(a, beta, limits['ODE_POINTS'] + 2)[1:-1]
    worst, used = 0.0, 0
    for x in grid:
        h = default_step(x, q)
        if x - 3 * h <= a or x + 3 * h >= beta:
            continue
        ratio = abs(ode_residual(value_fn, x, h)) / (abs(value_fn(x)) + q)
        worst = max(worst, ratio)
        used += 1
    return CheckResult('ode_residual', worst <= limits['ODE_RTOL'], {'max_relative': worst, 'points': used})


def _smooth_fit_check(value_fn, limits):
    if value_fn.kind is ValueKind.CAP_BELOW_B:
        return CheckResult('smooth_fit', True, {'skipped': 'cap below boundary'})
    slope = smooth_fit_slope(value_fn)
    return CheckResult('smooth_fit', abs(slope - 1.0) <= limits['SMOOTH_FIT_TOL'], {'slope': slope})


def _continuity_check(value_fn, limits):
    gaps = value_fn.branch_mismatches()
    worst = max(gaps.values())
    metrics = {f"gap_{key}": gap for key, gap in gaps.items()}
    return CheckResult('continuity', worst <= limits['CONTINUITY_TOL'] * value_fn.terms.q, metrics)


def _shape_check(value_fn, limits):
    a, q, beta, cap = value_fn.terms.a, value_fn.terms.q, value_fn.beta, value_fn.cap
    right = min(2.0 * beta, cap)
    grid = np.linspace(0.5 * a, right, limits['SHAPE_POINTS'])
    f = value_fn(grid)
    slack = 1e-12 * q
    lower = np.maximum(np.minimum(grid, cap) - q, 0.0)
    bounded = bool(np.all(f >= lower - slack) and np.all(f <= grid + slack))
    increasing = bool(np.all(np.diff(f) >= -slack))
    metrics = {'bounded': bounded, 'nondecreasing': increasing}
    passed = bounded and increasing
    if value_fn.kind is ValueKind.BASIC:
        second = f[:-2] - 2.0 * f[1:-1] + f[2:]
        convex = bool(np.all(second >= -1e-9 * q))
        metrics['midpoint_convex'] = convex
        passed = passed and convex
    return CheckResult('bounds_shape', passed, metrics)


def _convexity_check(value_fn, limits):
    terms = value_fn.terms
    if terms.k:
        return CheckResult('gtilde_convexity', True, {'skipped': 'margin contract'})
    q_over_a = terms.q_over_a
    y_star = value_fn.b / terms.a
    grid = np.linspace(q_over_a, max(10.0 * q_over_a, 2.0 * y_star), limits['CONVEXITY_POINTS'])
    report = gtilde_convexity_report(value_fn.roots, q_over_a, grid, eps=limits['CONVEXITY_EPS'])
    metrics = {
        'min_second_difference': report.min_second_difference,
        'violations': len(report.violations),
        'left_value': float(report.left_value),
    }
    # At a = q the left value is exactly 0; only convexity applies.
    passed = report.convex and (report.left_negative or q_over_a == 1.0)
    return CheckResult('gtilde_convexity', passed, metrics)


def _generator_check(value_fn):
    if value_fn.kind is ValueKind.CAP_BELOW_B:
        return CheckResult('exercise_generator', True, {'skipped': 'cap below boundary'})
    b = value_fn.b
    grid = np.linspace(b, min(2.0 * b, value_fn.cap), 50)
    values = exercise_generator(grid, value_fn.roots, value_fn.terms.q)
    return CheckResult('exercise_generator', bool(np.all(values >= 0)), {'min': float(values.min())})


def _mc_check(spec, value_fn, cfg, sigmas):
    terms, q = spec.terms, spec.terms.q
    rule = StoppingRule.for_terms(terms, value_fn.b)
    estimate = estimate_rule_value(rule, spec.s0, spec.market, terms.gamma, cfg)
    closed = value_fn(spec.s0)
    if spec.s0 > value_fn.cap and value_fn.mode is PayoffMode.PRINTED:
        # The rule oracle stops at once above L; compare with the stopped payoff.
        closed = value_fn.cap - q
    band = max(sigmas * estimate.stderr, 1e-12 * q)
    return CheckResult(
        'mc_agreement',
        abs(estimate.mean - closed) <= band,
        {
            'closed_form': closed,
            'mc_mean': estimate.mean,
            'mc_stderr': estimate.stderr,
            'n_paths': estimate.n_paths,
            'n_censored': estimate.n_censored,
            'seed': estimate.seed,
        },
    )


def _laplace_check(spec, value_fn, cfg, limits):
    a, beta, s0 = spec.terms.a, value_fn.beta, spec.s0
    if not a < s0 < beta:
        return CheckResult('laplace', True, {'skipped': 'S0 outside continuation region'})
    roots = value_fn.roots
    closed = hitting_expectation(s0, a, beta, roots)
    quadrature = laplace_quadrature(s0, a, beta, roots)
    estimate = estimate_hitting_laplace(a, beta, s0, roots.lam, spec.market, spec.terms.gamma, cfg)
    mc_ok = abs(estimate.mean - closed) <= limits['MC_SIGMAS'] * estimate.stderr
    quad_ok = abs(quadrature - closed) <= limits['QUADRATURE_TOL']
    return CheckResult(
        'laplace',
        mc_ok and quad_ok,
        {
            'closed_form': closed,
            'quadrature': quadrature,
            'mc_mean': estimate.mean,
            'mc_stderr': estimate.stderr,
            'n_censored': estimate.n_censored,
        },
    )


def cap_branch_report(spec, value_fn, cfg, sigmas=3.0):
    """
    Compare both evaluations above L with the stopped-payoff oracle and the
    re-entry oracle at x = 1.25 L (or S0 when larger).
    """
    L, q = value_fn.cap, spec.terms.q
    x = max(1.25 * L, spec.s0)
    printed = (L - q) * (x / L) ** value_fn.roots.lambda2
    stopped = L - q
    rule = StoppingRule.for_terms(spec.terms, value_fn.b)
    rule_estimate = estimate_rule_value(rule, x, spec.market, spec.terms.gamma, cfg)
    reentry = estimate_cap_reentry(x, L, q, spec.market, spec.terms.gamma, cfg)
    printed_matches_rule = abs(rule_estimate.mean - printed) <= max(sigmas * rule_estimate.stderr, 1e-12 * q)
    if not printed_matches_rule:
        logger.warning(
            "Value above the cap: printed branch %.6f differs from the stopped payoff %.6f at x=%.6f",
            printed,
            stopped,
            x,
        )
    return CheckResult(
        'cap_branch',
        True,
        {
            'x': x,
            'printed': printed,
            'exercise_payoff': stopped,
            'mc_stopped_rule': rule_estimate.mean,
            'mc_reentry': reentry.mean,
            'mc_reentry_stderr': reentry.stderr,
            'printed_matches_stopped_rule': printed_matches_rule,
            'printed_matches_reentry': abs(reentry.mean - printed) <= sigmas * reentry.stderr,
        },
        informational=True,
    )


def run_verification(
    spec, *, mode=PayoffMode.PRINTED, boundary_scale=1.0, cfg=None, with_mc=True, permissive=False
):
    """
    Numerical checks of the priced contract.

    ``boundary_scale`` rescales the solved b before building the value
    function, which lets callers confirm that the checks catch a wrong
    boundary.
    """
    limits = engine_settings('VERIFY')
    roots, solution, value_fn = price_contract(
        spec.market, spec.terms, mode=mode, permissive=permissive, solver_options=solver_options()
    )
    if boundary_scale != 1.0:
        value_fn = type(value_fn).build(spec.terms, roots, solution.b * boundary_scale, mode=mode)
    report = VerificationReport(b=value_fn.b, kind=value_fn.kind.value)
    report.checks.extend(
        [
            _ode_check(value_fn, limits),
            _smooth_fit_check(value_fn, limits),
            _continuity_check(value_fn, limits),
            _shape_check(value_fn, limits),
            _convexity_check(value_fn, limits),
            _generator_check(value_fn),
        ]
    )
    if with_mc:
        cfg = cfg or build_sim_config(spec)
        report.checks.append(_mc_check(spec, value_fn, cfg, limits['MC_SIGMAS']))
        report.checks.append(_laplace_check(spec, value_fn, cfg, limits))
        if math.isfinite(value_fn.cap):
            report.checks.append(cap_branch_report(spec, value_fn, cfg, limits['MC_SIGMAS']))
    for name in report.failures:
        logger.info("Verification check failed: %s", name)
    return report

