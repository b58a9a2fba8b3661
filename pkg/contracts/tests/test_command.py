import tempfile
from io import StringIO
from pathlib import Path

import pytest
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from contracts.documents import load_contract_document
from contracts.reports import VerificationReport
from pricing.fees import fair_fee
from pricing.management.commands import stockloan

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'
BASIC = str(FIXTURES / 'basic_contract.env')
CAPPED = str(FIXTURES / 'capped_contract.env')

DOCUMENT = """
market.r = {r}
market.sigma = 0.15
market.delta = {delta}
loan.q = 100
loan.gamma = {gamma}
loan.a = {a}
s0 = 100
"""

QUICK = {'paths': 10_000, 'dt': 0.01}


class StockLoanCommandTestCase(SimpleTestCase):
    def setUp(self):
        workdir = tempfile.TemporaryDirectory()
        self.addCleanup(workdir.cleanup)
        self.workdir = Path(workdir.name)

    def document(self, name='contract.env', r=0.05, delta=0.01, gamma=0.07, a=50, extra=''):
        path = self.workdir / name
        path.write_text(DOCUMENT.format(r=r, delta=delta, gamma=gamma, a=a) + extra, encoding='utf-8')
        return str(path)

    def run_command(self, *args, **options):
        out = StringIO()
        call_command('stockloan', *args, stdout=out, stderr=StringIO(), **options)
        return out.getvalue()

    def assertExitCode(self, code, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.run_command(*args, **options)
        self.assertEqual(ctx.exception.returncode, code, str(ctx.exception))
        return ctx.exception


class RootsCommandTests(StockLoanCommandTestCase):
    def test_reference_market(self):
        output = self.run_command('roots', config=BASIC)
        self.assertIn('μ = -0.275000', output)
        self.assertIn('Δ = 0.035625', output)
        self.assertIn('λ1 = 3.091639', output)
        self.assertIn('λ2 = 0.575028', output)
        self.assertIn('b(0) = 147.809', output)
        self.assertIn('regime = PositiveDividend', output)

    def test_inadmissible_market(self):
        self.assertExitCode(2, 'roots', config=self.document(r=0.10, gamma=0.05))


class PriceCommandTests(StockLoanCommandTestCase):
    def test_price_at_initial_spot(self):
        output = self.run_command('price', config=BASIC)
        self.assertIn('kind = Basic', output)
        self.assertIn('region = continuation', output)
        self.assertIn('f(100.000000) = ', output)

    def test_price_in_exercise_region(self):
        output = self.run_command('price', config=BASIC, at=200.0)
        self.assertIn('region = exercise', output)
        self.assertIn('f(200.000000) = 100.000000', output)

    def test_price_at_time(self):
        output = self.run_command('price', config=BASIC, time=1.0)
        self.assertIn('V_t(S_t=100.000000, t=1) = ', output)
        self.assertIn('b_t = ', output)

    def test_negative_time_is_a_usage_error(self):
        self.assertExitCode(64, 'price', config=BASIC, time=-1.0)

    @override_settings(STOCKLOAN={**settings.STOCKLOAN, 'VERIFY': {**settings.STOCKLOAN['VERIFY'], 'MC_SIGMAS': 4.0}})
    def test_price_with_monte_carlo_check(self):
        output = self.run_command('price', config=BASIC, verify=True, **QUICK)
        self.assertIn('paths=10000', output)
        self.assertIn('✅', output)

    def test_price_above_cap_with_exercise_payoff(self):
        output = self.run_command('price', config=CAPPED, at=300.0, mode='exercise-payoff')
        self.assertIn('region = above-cap', output)
        self.assertIn('f(300.000000) = 140.000000', output)


class FeeCommandTests(StockLoanCommandTestCase):
    def test_active_fee(self):
        output = self.run_command('fee', config=BASIC)
        self.assertIn('case=Active', output)
        self.assertIn('S0 - q + c = f(S0)', output)

    def test_terminated_at_start(self):
        output = self.run_command('fee', config=BASIC, at=40.0)
        self.assertIn('c = 60.000000, case=TerminatedAtStart', output)
        self.assertNotIn('b = ', output)

    def test_invalid_parameters(self):
        self.assertExitCode(2, 'fee', config=self.document(a=150))


class SweepCommandTests(StockLoanCommandTestCase):
    def test_sweep_to_stdout(self):
        output = self.run_command('sweep', config=BASIC, vary='a', range_spec='10:90:5')
        lines = output.splitlines()
        self.assertEqual(lines[0], 'a,case,b,f_s0,c,q_minus_c,q_minus_c_no_clause')
        self.assertTrue(lines[1].startswith('10,Active,'))
        self.assertIn('monotonicity.b = nonincreasing (expected nonincreasing, ok)', output)
        self.assertIn('monotonicity.q_minus_c', output)

    def test_sweep_to_file(self):
        target = self.workdir / 'sweep.csv'
        output = self.run_command('sweep', config=BASIC, vary='s0', range_spec='60:140:5', out=str(target))
        self.assertIn('✅ Wrote 5 rows', output)
        self.assertEqual(len(target.read_text(encoding='utf-8').splitlines()), 6)

    def test_sweep_needs_vary_and_range(self):
        self.assertExitCode(64, 'sweep', config=BASIC, vary='a')

    def test_unknown_sweep_parameter(self):
        self.assertExitCode(64, 'sweep', '--vary', 'q', '--range', '1:2:2', config=BASIC)

    def test_malformed_range(self):
        self.assertExitCode(64, 'sweep', config=BASIC, vary='a', range_spec='10:90')


@override_settings(STOCKLOAN={**settings.STOCKLOAN, 'VERIFY': {**settings.STOCKLOAN['VERIFY'], 'MC_SIGMAS': 4.0}})
class VerifyCommandTests(StockLoanCommandTestCase):
    def test_reference_contract_passes(self):
        target = self.workdir / 'verify.txt'
        output = self.run_command('verify', config=BASIC, out=str(target), **QUICK)
        self.assertIn('verify.passed=true', output)
        self.assertIn('✅ All verification checks passed', output)
        self.assertIn('check.mc_agreement.n_paths=10000', target.read_text(encoding='utf-8'))

    def test_wrong_boundary_fails(self):
        exc = self.assertExitCode(1, 'verify', config=BASIC, boundary_scale=1.2, paths=2_000, dt=0.01)
        self.assertIn('verification failed', str(exc))

    def test_bad_simulation_settings(self):
        self.assertExitCode(64, 'verify', config=BASIC, paths=0)


class ImpliedCommandTests(StockLoanCommandTestCase):
    def test_recovers_barrier(self):
        spec = load_contract_document(BASIC)
        target = fair_fee(spec.s0, spec.market, spec.terms).c
        output = self.run_command('implied', config=BASIC, target_fee=target)
        first = output.splitlines()[0]
        self.assertTrue(first.startswith('a = '))
        self.assertAlmostEqual(float(first.split('=')[1]), 50.0, places=3)
        self.assertIn('case=Active', output)

    def test_unreachable_target(self):
        self.assertExitCode(2, 'implied', config=BASIC, target_fee=1000.0)

    def test_target_is_required(self):
        self.assertExitCode(64, 'implied', config=BASIC)


class UsageErrorTests(StockLoanCommandTestCase):
    def test_missing_config(self):
        self.assertExitCode(64, 'roots')

    def test_missing_file(self):
        self.assertExitCode(64, 'roots', config=str(self.workdir / 'absent.env'))

    def test_unknown_key(self):
        self.assertExitCode(64, 'fee', config=self.document(extra='loan.spread = 0.01\n'))

    def test_unknown_operation(self):
        self.assertExitCode(64, 'quote', config=BASIC)


class PermissiveFlagTests(StockLoanCommandTestCase):
    """γ − r + δ < 0 with δ > 0: priced only under the cap-and-margin wording."""

    def permissive_document(self):
        return self.document(r=0.10, delta=0.01, gamma=0.05)

    def test_roots(self):
        config = self.permissive_document()
        self.assertExitCode(2, 'roots', config=config)
        self.assertIn('regime = PositiveDividend', self.run_command('roots', config=config, permissive=True))

    def test_sweep(self):
        config = self.permissive_document()
        output = self.run_command('sweep', config=config, vary='a', range_spec='30:50:2', permissive=True)
        lines = output.splitlines()
        self.assertTrue(lines[1].startswith('30,Active,'), lines[1])
        self.assertTrue(lines[2].startswith('50,Active,'), lines[2])
        strict = self.run_command('sweep', config=config, vary='a', range_spec='30:50:2')
        self.assertTrue(strict.splitlines()[1].startswith('30,inadmissible,'))

    def test_implied(self):
        config = self.permissive_document()
        spec = load_contract_document(config)
        target = fair_fee(spec.s0, spec.market, spec.terms, permissive=True).c
        output = self.run_command('implied', config=config, target_fee=target, permissive=True)
        self.assertAlmostEqual(float(output.splitlines()[0].split('=')[1]), 50.0, places=3)
        self.assertIn('case=Active', output)
        self.assertIn('b = ', output)
        self.assertExitCode(2, 'implied', config=config, target_fee=target)

    def test_verify_forwards_flag(self):
        calls = []

        def record(spec, **kwargs):
            calls.append(kwargs)
            return VerificationReport(b=1.0, kind='Basic')

        with pytest.MonkeyPatch.context() as mp:
            mp.setattr(stockloan, 'run_verification', record)
            self.run_command('verify', config=self.permissive_document(), permissive=True, **QUICK)
            self.run_command('verify', config=self.permissive_document(), **QUICK)
        self.assertEqual([call['permissive'] for call in calls], [True, False])
