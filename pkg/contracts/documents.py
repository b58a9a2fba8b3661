"""
Contract documents: ``dotted.key = value`` files read with python-dotenv.

Example::

    market.r = 0.05
    market.sigma = 0.15
    market.delta = 0.01
    loan.q = 100
    loan.gamma = 0.07
    loan.a = 50
    s0 = 100
    mc.seed = 20240917
"""

import io
import logging
from pathlib import Path

from dotenv import dotenv_values

from pricing.exceptions import StockLoanError

from .serializers import ContractSpecSerializer

logger = logging.getLogger(__name__)


class ContractDocumentError(StockLoanError):
    """The document is missing, unreadable or violates the schema."""

    code = 'schema'

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


def nest_keys(flat):
    """Turn ``{'loan.q': '100'}`` into ``{'loan': {'q': '100'}}``."""
    nested = {}
    for key, value in flat.items():
        *sections, leaf = key.split('.')
        node = nested
        for section in sections:
            child = node.setdefault(section, {})
            if not isinstance(child, dict):
                raise ContractDocumentError(f"{key}: '{section}' is both a value and a section")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ContractDocumentError(f"{key}: '{leaf}' is both a value and a section")
        node[leaf] = value
    return nested


def _flatten_errors(errors, prefix=''):
    if isinstance(errors, dict):
        for key, value in errors.items():
            yield from _flatten_errors(value, f"{prefix}{key}.")
    elif isinstance(errors, list) and errors and not isinstance(errors[0], (dict, list)):
        yield f"{prefix.rstrip('.')}: {' '.join(str(e) for e in errors)}"
    else:
        for item in errors:
            yield from _flatten_errors(item, prefix)


def build_contract(data):
    """Validate a nested mapping and return the ContractSpec."""
    serializer = ContractSpecSerializer(data=data)
    if not serializer.is_valid():
        problems = list(_flatten_errors(serializer.errors))
        raise ContractDocumentError('; '.join(problems), errors=serializer.errors)
    return serializer.save()


def parse_contract_document(text):
    flat = dotenv_values(stream=io.StringIO(text))
    return build_contract(nest_keys(flat))


def load_contract_document(path):
    path = Path(path)
    if not path.is_file():
        raise ContractDocumentError(f"contract document not found: {path}")
    logger.debug("Loading contract document %s", path)
    return build_contract(nest_keys(dotenv_values(path)))


def format_number(value):
    """Shortest of 12 significant digits and repr that reads back exactly."""
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    text = f"{value:.12g}"
    return text if float(text) == value else repr(value)


def render_contract_document(spec):
    data = ContractSpecSerializer(instance=spec).data
    lines = []
    for section in ('market', 'loan'):
        for key, value in data[section].items():
            if value is not None:
                lines.append(f"{section}.{key} = {format_number(value)}")
    lines.append(f"s0 = {format_number(data['s0'])}")
    for key, value in (data.get('mc') or {}).items():
        if value is not None:
            lines.append(f"mc.{key} = {format_number(value)}")
    return '\n'.join(lines) + '\n'
