"""Shared floating-point helpers.

All powers ``x**p`` in the engine go through :func:`power` so that the
boundary solver, the value functions and the oracle agree bit for bit.
"""

import numpy as np


def power(x, p):
    """Return ``exp(p * log(x))`` for positive ``x`` (scalar or array).

    ``x == 0`` maps to 0 for ``p > 0`` and to ``inf`` for ``p < 0``.
    """
    with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
        result = np.exp(np.multiply(p, np.log(x)))
    if np.ndim(result) == 0:
        return float(result)
    return result


def sinh_ratio(u, v, s):
    """Return ``sinh(s*u) / sinh(s*v)``, continuous at ``s == 0`` (limit ``u/v``)."""
    if s == 0.0:
        return np.divide(u, v)
    return np.sinh(np.multiply(s, u)) / np.sinh(s * v)


def sinh_ratio_slope(u, v, s):
    """Return ``d/du sinh(s*u) / sinh(s*v) = s*cosh(s*u) / sinh(s*v)`` (``1/v`` at ``s == 0``)."""
    if s == 0.0:
        return np.divide(np.ones_like(u, dtype=float), v)
    return s * np.cosh(np.multiply(s, u)) / np.sinh(s * v)


def as_output(value):
    """Collapse 0-d arrays to ``float`` so scalar calls return scalars."""
    if np.ndim(value) == 0:
        return float(value)
    return value
