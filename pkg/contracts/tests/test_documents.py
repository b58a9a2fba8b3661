from pathlib import Path

import pytest
from django.test import SimpleTestCase

from contracts.documents import (
    ContractDocumentError,
    format_number,
    load_contract_document,
    nest_keys,
    parse_contract_document,
    render_contract_document,
)
from contracts.models import ContractSpec
from contracts.serializers import ContractQuoteSerializer, FeeQuoteSerializer
from pricing.exceptions import InvalidParameterError
from pricing.fees import fair_fee, negotiate

FIXTURES = Path(__file__).resolve().parent.parent / 'fixtures'

BASIC = """
market.r = 0.05
market.sigma = 0.15
market.delta = 0.01
loan.q = 100
loan.gamma = 0.07
loan.a = 50
s0 = 100
"""


class ContractDocumentTests(SimpleTestCase):
    def test_parses_basic_document(self):
        spec = parse_contract_document(BASIC)
        self.assertIsInstance(spec, ContractSpec)
        self.assertEqual(spec.market.sigma, 0.15)
        self.assertEqual(spec.terms.a, 50.0)
        self.assertIsNone(spec.terms.L)
        self.assertEqual(spec.terms.k, 0.0)
        self.assertEqual(spec.mc, {})

    def test_loads_fixture_with_cap_and_margin(self):
        spec = load_contract_document(FIXTURES / 'capped_contract.env')
        self.assertEqual(spec.terms.L, 240.0)
        self.assertEqual(spec.terms.k, 0.5)
        self.assertEqual(spec.mc['seed'], 20240917)

    def test_comments_and_blank_lines_are_ignored(self):
        spec = parse_contract_document("# reference contract\n\n" + BASIC + "\n# end\n")
        self.assertEqual(spec.s0, 100.0)

    def test_missing_file(self):
        with self.assertRaises(ContractDocumentError):
            load_contract_document(FIXTURES / 'no-such-contract.env')

    def test_unknown_key_is_rejected(self):
        with self.assertRaises(ContractDocumentError) as ctx:
            parse_contract_document(BASIC + "loan.spread = 0.01\n")
        self.assertIn('loan.spread', str(ctx.exception))

    def test_unknown_section_is_rejected(self):
        with self.assertRaises(ContractDocumentError) as ctx:
            parse_contract_document(BASIC + "broker.name = acme\n")
        self.assertIn('broker', str(ctx.exception))

    def test_missing_required_key(self):
        text = BASIC.replace("market.delta = 0.01\n", "")
        with self.assertRaises(ContractDocumentError) as ctx:
            parse_contract_document(text)
        self.assertIn('market.delta', str(ctx.exception))

    def test_non_numeric_value(self):
        with self.assertRaises(ContractDocumentError):
            parse_contract_document(BASIC.replace("loan.a = 50", "loan.a = fifty"))

    def test_nonpositive_time_step(self):
        with self.assertRaises(ContractDocumentError):
            parse_contract_document(BASIC + "mc.dt = 0\n")

    def test_value_and_section_clash(self):
        with self.assertRaises(ContractDocumentError):
            nest_keys({'loan': '1', 'loan.q': '100'})

    def test_economic_invariants_are_left_to_the_dataclasses(self):
        with self.assertRaises(InvalidParameterError):
            parse_contract_document(BASIC.replace("loan.a = 50", "loan.a = 150"))

    def test_render_round_trip(self):
        spec = load_contract_document(FIXTURES / 'capped_contract.env')
        text = render_contract_document(spec)
        self.assertIn('loan.L = 240', text)
        self.assertIn('mc.seed = 20240917', text)
        self.assertEqual(parse_contract_document(text), spec)

    def test_render_omits_absent_cap(self):
        text = render_contract_document(parse_contract_document(BASIC))
        self.assertNotIn('loan.L', text)
        self.assertIn('loan.k = 0', text)

    def test_render_keeps_full_precision(self):
        spec = parse_contract_document(BASIC.replace("loan.a = 50", "loan.a = 0.1234567890123456"))
        self.assertEqual(parse_contract_document(render_contract_document(spec)).terms.a, spec.terms.a)

    def test_with_value(self):
        spec = parse_contract_document(BASIC)
        self.assertEqual(spec.with_value('a', 30.0).terms.a, 30.0)
        self.assertEqual(spec.with_value('s0', 80.0).s0, 80.0)
        with self.assertRaises(ValueError):
            spec.with_value('q', 90.0)


@pytest.mark.parametrize(
    'value, text',
    [(100.0, '100'), (0.07, '0.07'), (20240917, '20240917'), (True, 'true'), (0.1234567890123456, '0.1234567890123456')],
)
def test_format_number(value, text):
    assert format_number(value) == text


class QuoteSerializerTests(SimpleTestCase):
    def setUp(self):
        self.spec = load_contract_document(FIXTURES / 'basic_contract.env')

    def test_fee_quote(self):
        quote = fair_fee(self.spec.s0, self.spec.market, self.spec.terms)
        data = FeeQuoteSerializer(quote).data
        self.assertEqual(data['case'], 'Active')
        self.assertAlmostEqual(data['initial_cash'], 100.0 - data['c'])

    def test_contract_quote(self):
        quote = negotiate(self.spec.terms, self.spec.market, self.spec.s0)
        data = ContractQuoteSerializer(quote).data
        self.assertEqual(data['regime'], 'PositiveDividend')
        self.assertEqual(data['kind'], 'Basic')
        self.assertGreater(data['b'], 100.0)
        self.assertEqual(data['diagnostics'], [])

    def test_contract_quote_power_basis(self):
        quote = negotiate(self.spec.terms, self.spec.market, self.spec.s0)
        data = ContractQuoteSerializer(quote).data
        c1, c2 = data['coefficients']
        for x in (60.0, 100.0, 120.0):
            basis = c1 * x ** data['lambda1'] + c2 * x ** data['lambda2']
            self.assertAlmostEqual(basis, quote.value_fn.interior(x), places=9)
        at_spot = c1 * 100.0 ** data['lambda1'] + c2 * 100.0 ** data['lambda2']
        self.assertAlmostEqual(at_spot, data['fee']['value'], places=9)

    def test_failed_negotiation(self):
        terms = self.spec.terms.with_barrier(100.0)
        quote = negotiate(terms, self.spec.market, 120.0)
        data = ContractQuoteSerializer(quote).data
        self.assertIsNone(data['b'])
        self.assertIsNone(data['fee'])
        self.assertIsNone(data['coefficients'])
        self.assertEqual(data['diagnostics'][0]['error'], 'bracket-failure')
