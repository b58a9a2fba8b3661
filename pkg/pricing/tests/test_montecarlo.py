from dataclasses import replace

import numpy as np
import pytest

from pricing.boundary import solve_boundary
from pricing.exceptions import DomainError, SimConfigError
from pricing.models import LoanTerms
from pricing.montecarlo import (
    COARSE_SIGMAS,
    MAX_STRIDE,
    SimConfig,
    StoppingRule,
    _strides,
    estimate_cap_reentry,
    estimate_hitting_laplace,
    estimate_rule_value,
    grid_search_threshold,
)
from pricing.valuation import ValueFunction, hitting_expectation

Q, GAMMA = 100.0, 0.07

# Wider than the 3σ used by the verify command; the default suite runs
# with reduced path counts and should not flake.
SIGMAS = 4.0


def priced(roots, terms):
    return ValueFunction.build(terms, roots, solve_boundary(roots, terms).b)


class TestSimConfig:
    @pytest.mark.parametrize(
        'overrides',
        [
            {'n_paths': 0},
            {'dt': 0.0},
            {'horizon': 0.5},
            {'seed': -1},
            {'seed': 2**64},
            {'workers': 0},
        ],
    )
    def test_rejects_invalid_settings(self, quick_mc, overrides):
        with pytest.raises(SimConfigError):
            replace(quick_mc, **overrides)

    def test_step_and_block_counts(self, quick_mc):
        assert quick_mc.n_steps == 20_000
        assert quick_mc.n_blocks == 3


class TestRuleValue:
    def test_matches_closed_form(self, market, roots, basic_terms, quick_mc):
        value_fn = priced(roots, basic_terms)
        rule = StoppingRule.for_terms(basic_terms, value_fn.b)
        estimate = estimate_rule_value(rule, 100.0, market, GAMMA, quick_mc)
        assert estimate.agrees_with(value_fn(100.0), SIGMAS)
        assert estimate.n_paths == 20_000
        assert estimate.seed == 20240917
        assert not estimate.horizon_warning

    def test_matches_closed_form_with_cap_and_margin(self, market, roots, capped_terms, quick_mc):
        value_fn = priced(roots, capped_terms)
        rule = StoppingRule.for_terms(capped_terms, value_fn.b)
        estimate = estimate_rule_value(rule, 100.0, market, GAMMA, quick_mc)
        assert estimate.agrees_with(value_fn(100.0), SIGMAS)

    def test_start_above_boundary_is_exact(self, market, roots, basic_terms, quick_mc):
        rule = StoppingRule.for_terms(basic_terms, 140.0)
        estimate = estimate_rule_value(rule, 150.0, market, GAMMA, quick_mc)
        assert estimate.mean == pytest.approx(50.0)
        assert estimate.stderr == 0.0

    def test_start_below_barrier_pays_margin(self, market, capped_terms, quick_mc):
        rule = StoppingRule.for_terms(capped_terms, 180.0)
        estimate = estimate_rule_value(rule, 8.0, market, GAMMA, quick_mc)
        assert estimate.mean == pytest.approx(4.0)
        assert estimate.stderr == 0.0

    def test_reproducible_for_a_seed(self, market, basic_terms, quick_mc):
        rule = StoppingRule.for_terms(basic_terms, 140.0)
        small = replace(quick_mc, n_paths=5_000)
        first = estimate_rule_value(rule, 100.0, market, GAMMA, small)
        second = estimate_rule_value(rule, 100.0, market, GAMMA, small)
        assert first == second

    def test_independent_of_worker_count(self, market, basic_terms, quick_mc):
        rule = StoppingRule.for_terms(basic_terms, 140.0)
        serial = replace(quick_mc, n_paths=10_000, block_size=4096)
        threaded = replace(serial, workers=3)
        assert estimate_rule_value(rule, 100.0, market, GAMMA, serial) == estimate_rule_value(
            rule, 100.0, market, GAMMA, threaded
        )

    def test_seed_changes_estimate(self, market, basic_terms, quick_mc):
        rule = StoppingRule.for_terms(basic_terms, 140.0)
        small = replace(quick_mc, n_paths=5_000)
        first = estimate_rule_value(rule, 100.0, market, GAMMA, small)
        second = estimate_rule_value(rule, 100.0, market, GAMMA, replace(small, seed=7))
        assert first.mean != second.mean

    def test_short_horizon_reports_censoring(self, market, basic_terms, quick_mc):
        rule = StoppingRule.for_terms(basic_terms, 140.0)
        short = replace(quick_mc, n_paths=2_000, horizon=1.0)
        estimate = estimate_rule_value(rule, 100.0, market, GAMMA, short)
        assert estimate.n_censored > 0
        assert estimate.horizon_warning
        assert 0 < estimate.censored_ratio <= 1


class TestGridSearch:
    def test_closed_form_boundary_wins(self, market, roots, basic_terms, quick_mc):
        b = priced(roots, basic_terms).b
        result = grid_search_threshold([0.8 * b, b, 1.5 * b], 100.0, market, GAMMA, basic_terms, quick_mc)
        assert result.best_b == b
        assert len(result.estimates) == 3

    def test_single_candidate(self, market, basic_terms, quick_mc):
        result = grid_search_threshold([140.0], 100.0, market, GAMMA, basic_terms, replace(quick_mc, n_paths=2_000))
        assert result.best_b == 140.0

    def test_candidate_order_does_not_matter(self, market, basic_terms, quick_mc):
        cfg = replace(quick_mc, n_paths=2_000)
        forward = grid_search_threshold([120.0, 140.0], 100.0, market, GAMMA, basic_terms, cfg)
        backward = grid_search_threshold([140.0, 120.0], 100.0, market, GAMMA, basic_terms, cfg)
        np.testing.assert_array_equal(forward.means, backward.means[::-1])

    def test_rejects_empty_grid(self, market, basic_terms, quick_mc):
        with pytest.raises(DomainError):
            grid_search_threshold([], 100.0, market, GAMMA, basic_terms, quick_mc)


class TestStepSize:
    def test_halving_the_step_keeps_the_estimate(self, market, roots, basic_terms, quick_mc):
        value_fn = priced(roots, basic_terms)
        rule = StoppingRule.for_terms(basic_terms, value_fn.b)
        coarse = estimate_rule_value(rule, 100.0, market, GAMMA, replace(quick_mc, dt=0.02))
        fine = estimate_rule_value(rule, 100.0, market, GAMMA, replace(quick_mc, dt=0.01))
        assert coarse.agrees_with(fine.mean, SIGMAS, fine.stderr)

    def test_bridge_removes_coarse_step_bias(self, market, roots, basic_terms, quick_mc):
        value_fn = priced(roots, basic_terms)
        rule = StoppingRule.for_terms(basic_terms, value_fn.b)
        coarse = replace(quick_mc, dt=0.1)
        bridged = estimate_rule_value(rule, 100.0, market, GAMMA, coarse)
        endpoints = estimate_rule_value(rule, 100.0, market, GAMMA, replace(coarse, bridge_correction=False))
        closed = value_fn(100.0)
        assert bridged.agrees_with(closed, SIGMAS)
        assert not endpoints.agrees_with(closed, SIGMAS)
        assert abs(endpoints.mean - closed) > abs(bridged.mean - closed)

    def test_move_length(self):
        sd, drift = 0.01, -0.001
        gaps = np.array([0.01, 0.2, 1.0, 50.0, np.inf])
        strides = _strides(gaps, sd, drift, np.full(5, 10_000))
        assert list(strides) == [1, 4, 64, MAX_STRIDE, MAX_STRIDE]
        longer = strides[1:3]
        assert np.all(COARSE_SIGMAS * sd * np.sqrt(longer) + abs(drift) * longer <= gaps[1:3])
        assert np.all(COARSE_SIGMAS * sd * np.sqrt(2 * longer) + abs(drift) * 2 * longer > gaps[1:3])

    def test_move_length_without_drift_and_near_horizon(self):
        assert list(_strides(np.array([1.0]), 0.01, 0.0, np.array([10_000]))) == [128]
        assert list(_strides(np.array([50.0]), 0.01, -0.001, np.array([100]))) == [100]


LAPLACE_BARRIERS = [10.0, 30.0, 50.0, 70.0, 90.0]


class TestHittingTransforms:
    @pytest.mark.parametrize('a', LAPLACE_BARRIERS)
    def test_laplace_matches_closed_form(self, market, roots, quick_mc, a):
        b = priced(roots, LoanTerms(q=Q, gamma=GAMMA, a=a)).b
        estimate = estimate_hitting_laplace(a, b, 100.0, roots.lam, market, GAMMA, quick_mc)
        assert estimate.agrees_with(hitting_expectation(100.0, a, b, roots), SIGMAS)

    def test_laplace_needs_ordered_barriers(self, market, roots, quick_mc):
        with pytest.raises(DomainError):
            estimate_hitting_laplace(140.0, 50.0, 100.0, roots.lam, market, GAMMA, quick_mc)

    def test_cap_reentry_matches_printed_branch(self, market, roots, quick_mc):
        L, x = 120.0, 150.0
        estimate = estimate_cap_reentry(x, L, Q, market, GAMMA, quick_mc)
        assert estimate.agrees_with((L - Q) * (x / L) ** roots.lambda2, SIGMAS)

    def test_cap_reentry_needs_start_above_cap(self, market, quick_mc):
        with pytest.raises(DomainError):
            estimate_cap_reentry(100.0, 120.0, Q, market, GAMMA, quick_mc)


@pytest.mark.slow
class TestFullSizeOracle:
    """2e5 paths at dt = 1/2000 with the bridge correction, 3 standard errors."""

    @pytest.mark.parametrize(
        'contract',
        [
            {'a': 50.0},
            {'a': 10.0},
            {'a': 30.0},
            {'a': 70.0},
            {'a': 10.0, 'k': 0.5},
            {'a': 50.0, 'k': 0.3},
            {'a': 10.0, 'L': 240.0, 'k': 0.5},
            {'a': 10.0, 'L': 160.0},
            {'a': 30.0, 'L': 120.0},
            {'a': 30.0, 'L': 120.0, 'k': 0.3},
        ],
    )
    def test_rule_value(self, market, roots, full_mc, contract):
        terms = LoanTerms(q=Q, gamma=GAMMA, **contract)
        value_fn = priced(roots, terms)
        estimate = estimate_rule_value(StoppingRule.for_terms(terms, value_fn.b), 100.0, market, GAMMA, full_mc)
        assert estimate.agrees_with(value_fn(100.0), 3.0)

    @pytest.mark.parametrize(
        'contract',
        [
            {'a': 10.0},
            {'a': 30.0},
            {'a': 50.0},
            {'a': 10.0, 'k': 0.5},
            {'a': 50.0, 'k': 0.3},
        ],
    )
    def test_argmax_within_one_cell(self, market, roots, full_mc, contract):
        terms = LoanTerms(q=Q, gamma=GAMMA, **contract)
        b = priced(roots, terms).b
        grid = np.linspace(0.5 * b, 1.5 * b, 21)
        result = grid_search_threshold(grid, 100.0, market, GAMMA, terms, full_mc)
        assert abs(result.best_index - 10) <= 1

    @pytest.mark.parametrize('a', LAPLACE_BARRIERS)
    def test_laplace(self, market, roots, full_mc, a):
        b = priced(roots, LoanTerms(q=Q, gamma=GAMMA, a=a)).b
        estimate = estimate_hitting_laplace(a, b, 100.0, roots.lam, market, GAMMA, full_mc)
        assert estimate.agrees_with(hitting_expectation(100.0, a, b, roots), 3.0)
