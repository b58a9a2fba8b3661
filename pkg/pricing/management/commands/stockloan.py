"""
Django management command for the stock loan engine.

Usage:
    python manage.py stockloan roots --config contract.env
    python manage.py stockloan price --config contract.env --at 120 --mode exercise-payoff --verify
    python manage.py stockloan fee --config contract.env
    python manage.py stockloan sweep --config contract.env --vary a --range 1:100:50 --out sweep.csv
    python manage.py stockloan verify --config contract.env --paths 50000
    python manage.py stockloan implied --config contract.env --target-fee 20

Exit codes: 0 success, 1 verification failure, 2 inadmissible or invalid
parameters, 64 usage errors.
"""

import math
import sys

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from contracts.documents import ContractDocumentError, load_contract_document
from contracts.models import VARIABLE_PARAMETERS
from contracts.reports import (
    build_sim_config,
    monotonicity_summary,
    parse_range,
    run_sweep,
    run_verification,
    solver_options,
    write_csv,
)
from contracts.serializers import ContractQuoteSerializer, FeeQuoteSerializer
from pricing.boundary import limit_boundary
from pricing.exceptions import SimConfigError, StockLoanError
from pricing.fees import FeeCase, fair_fee, implied_barrier, negotiate, price_contract
from pricing.models import RegimeTag, classify_regime, compute_roots, margin_bound
from pricing.montecarlo import StoppingRule, estimate_rule_value
from pricing.valuation import PayoffMode, value_at_time

EXIT_VERIFY_FAILED = 1
EXIT_INVALID_PARAMETERS = 2
EXIT_USAGE = 64

COMMANDS = ('roots', 'price', 'fee', 'sweep', 'verify', 'implied')


def _usage_error(message):
    raise CommandError(f"usage: {message}", returncode=EXIT_USAGE)


class Command(BaseCommand):
    help = 'Price perpetual stock loans: roots, price, fee, sweep, verify, implied'

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # Bad flags exit with the usage code instead of argparse's 2.
        parser.error = _usage_error
        return parser

    def run_from_argv(self, argv):
        # Django only maps CommandError to an exit code inside execute(), after parsing.
        try:
            super().run_from_argv(argv)
        except CommandError as exc:
            self.stderr.write(f"CommandError: {exc}")
            sys.exit(exc.returncode)

    def add_arguments(self, parser):
        parser.add_argument('command', choices=COMMANDS, help='Operation to run')
        parser.add_argument('--config', type=str, default=None, help='Contract document (dotted key = value)')
        parser.add_argument('--at', type=float, default=None, help='Price x to evaluate (default: s0)')
        parser.add_argument(
            '--mode',
            choices=[mode.value for mode in PayoffMode],
            default=PayoffMode.PRINTED.value,
            help='Evaluation above the cap (default: printed)',
        )
        parser.add_argument('--verify', action='store_true', help='Cross-check price with Monte Carlo')
        parser.add_argument('--time', type=float, default=None, help='Report V_t at time t for S_t = --at')
        parser.add_argument('--vary', choices=VARIABLE_PARAMETERS, default=None, help='Parameter to sweep')
        parser.add_argument('--range', dest='range_spec', type=str, default=None, help='Sweep grid lo:hi:n')
        parser.add_argument('--out', type=str, default=None, help='Output file (CSV or key=value summary)')
        parser.add_argument('--seed', type=int, default=None, help='Monte Carlo seed (overrides STOCKLOAN_SEED)')
        parser.add_argument('--paths', type=int, default=None, help='Monte Carlo path count')
        parser.add_argument('--dt', type=float, default=None, help='Monte Carlo time step in years')
        parser.add_argument('--target-fee', type=float, default=None, help='Fee to invert for the barrier a')
        parser.add_argument(
            '--boundary-scale',
            type=float,
            default=1.0,
            help='Rescale the solved boundary before verifying (default: 1.0)',
        )
        parser.add_argument('--permissive', action='store_true', help='Accept any δ > 0 for capped contracts')

    def handle(self, *args, **options):
        if not options['config']:
            raise CommandError('usage: --config FILE is required', returncode=EXIT_USAGE)
        try:
            spec = load_contract_document(options['config'])
            handler = getattr(self, f"handle_{options['command']}")
            handler(spec, options)
        except (ContractDocumentError, SimConfigError) as exc:
            raise CommandError(f"usage: {exc}", returncode=EXIT_USAGE) from exc
        except StockLoanError as exc:
            raise CommandError(f"{exc.code}: {exc}", returncode=EXIT_INVALID_PARAMETERS) from exc

    def _sim_config(self, spec, options):
        return build_sim_config(spec, seed=options['seed'], n_paths=options['paths'], dt=options['dt'])

    def _human(self, label, value):
        self.stdout.write(f"{label} = {value:.6f}")

    def handle_roots(self, spec, options):
        regime = classify_regime(spec.market, spec.terms, permissive=options['permissive'])
        if regime.tag is RegimeTag.INADMISSIBLE:
            raise CommandError(f"inadmissible: {regime.detail}", returncode=EXIT_INVALID_PARAMETERS)
        roots = compute_roots(spec.market, spec.terms.gamma, permissive=options['permissive'])
        self._human('μ', roots.mu)
        self._human('Δ', roots.delta_disc)
        self._human('λ1', roots.lambda1)
        self._human('λ2', roots.lambda2)
        self._human('b(0)', limit_boundary(roots, spec.terms.q))
        self._human('h(q/a)', margin_bound(roots, spec.terms.q_over_a))
        self.stdout.write(f"regime = {regime.tag.value} ({regime.detail})")

    def handle_price(self, spec, options):
        mode = PayoffMode(options['mode'])
        x = spec.s0 if options['at'] is None else options['at']
        _, solution, value_fn = price_contract(
            spec.market,
            spec.terms,
            mode=mode,
            permissive=options['permissive'],
            solver_options=solver_options(),
        )
        self.stdout.write(f"Contract: {spec.terms}")
        self._human('b', solution.b)
        self.stdout.write(f"kind = {value_fn.kind.value}")

        t = options['time']
        if t is not None:
            if t < 0:
                raise CommandError('usage: --time must be nonnegative', returncode=EXIT_USAGE)
            discounted = x * math.exp(-spec.terms.gamma * t)
            self.stdout.write(f"region = {value_fn.region(discounted)}")
            self._human(f"V_t(S_t={x:.6f}, t={t:g})", value_at_time(t, x, value_fn))
            self._human('b_t', value_fn.boundary_at_time(t))
            return

        value = value_fn(x)
        self.stdout.write(f"region = {value_fn.region(x)}")
        self._human(f"f({x:.6f})", value)

        if options['verify']:
            cfg = self._sim_config(spec, options)
            rule = StoppingRule.for_terms(spec.terms, value_fn.b)
            estimate = estimate_rule_value(rule, x, spec.market, spec.terms.gamma, cfg)
            sigmas = settings.STOCKLOAN['VERIFY']['MC_SIGMAS']
            if x > value_fn.cap:
                # The rule stops at once above L.
                value = value_fn.cap - spec.terms.q
            agree = estimate.agrees_with(value, sigmas) or abs(estimate.mean - value) <= 1e-12 * spec.terms.q
            self.stdout.write(f"mc = {estimate.mean:.6f} ± {estimate.stderr:.6f} "
                              f"(paths={estimate.n_paths}, censored={estimate.n_censored}, seed={estimate.seed})")
            if agree:
                self.stdout.write(self.style.SUCCESS(f"✅ closed form and Monte Carlo agree within {sigmas:g}σ"))
            else:
                self.stdout.write(self.style.ERROR(f"❌ closed form and Monte Carlo differ by more than {sigmas:g}σ"))
                raise CommandError('price verification failed', returncode=EXIT_VERIFY_FAILED)

    def handle_fee(self, spec, options):
        s0 = spec.s0 if options['at'] is None else options['at']
        quote = fair_fee(
            s0,
            spec.market,
            spec.terms,
            mode=PayoffMode(options['mode']),
            permissive=options['permissive'],
            solver_options=solver_options(),
        )
        data = FeeQuoteSerializer(quote).data
        self.stdout.write(f"c = {data['c']:.6f}, case={data['case']}")
        if not math.isnan(data['b']):
            self._human('b', data['b'])
        self._human('q - c', data['initial_cash'])
        if quote.case is FeeCase.ACTIVE:
            self.stdout.write(
                f"S0 - q + c = f(S0): {s0:.6f} - {spec.terms.q:.6f} + {quote.c:.6f} = {quote.value:.6f}"
            )

    def handle_sweep(self, spec, options):
        if not options['vary'] or not options['range_spec']:
            raise CommandError('usage: sweep needs --vary and --range', returncode=EXIT_USAGE)
        values = parse_range(options['range_spec'])
        frame = run_sweep(
            spec,
            options['vary'],
            values,
            mode=PayoffMode(options['mode']),
            permissive=options['permissive'],
        )
        if options['out']:
            write_csv(frame, options['out'])
            self.stdout.write(self.style.SUCCESS(f"✅ Wrote {len(frame)} rows to {options['out']}"))
        else:
            self.stdout.write(write_csv(frame), ending='')
        for row in monotonicity_summary(frame, options['vary']):
            expected = row['expected'] or '-'
            verdict = {True: 'ok', False: 'MISMATCH', None: 'n/a'}[row['ok']]
            self.stdout.write(
                f"monotonicity.{row['column']} = {row['observed']} (expected {expected}, {verdict})"
            )

    def handle_verify(self, spec, options):
        cfg = self._sim_config(spec, options)
        report = run_verification(
            spec,
            mode=PayoffMode(options['mode']),
            boundary_scale=options['boundary_scale'],
            cfg=cfg,
            permissive=options['permissive'],
        )
        lines = list(report.lines())
        for line in lines:
            self.stdout.write(line)
        if options['out']:
            with open(options['out'], 'w', encoding='utf-8') as handle:
                handle.write('\n'.join(lines) + '\n')
        if not report.passed:
            self.stdout.write(self.style.ERROR(f"❌ Verification failed: {', '.join(report.failures)}"))
            raise CommandError('verification failed', returncode=EXIT_VERIFY_FAILED)
        self.stdout.write(self.style.SUCCESS('✅ All verification checks passed'))

    def handle_implied(self, spec, options):
        if options['target_fee'] is None:
            raise CommandError('usage: implied needs --target-fee', returncode=EXIT_USAGE)
        a = implied_barrier(
            options['target_fee'], spec.market, spec.terms, spec.s0, permissive=options['permissive']
        )
        quote = negotiate(
            spec.terms.with_barrier(a),
            spec.market,
            spec.s0,
            permissive=options['permissive'],
            solver_options=solver_options(),
        )
        self._human('a', a)
        summary = ContractQuoteSerializer(quote).data
        if summary['fee'] is not None:
            self.stdout.write(f"c = {summary['fee']['c']:.6f}, case={summary['fee']['case']}")
        if summary['b'] is not None:
            self._human('b', summary['b'])
