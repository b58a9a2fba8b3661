import pytest

from pricing.models import LoanTerms, MarketParams, compute_roots
from pricing.montecarlo import SimConfig

# Market used throughout the numerical examples.
R, SIGMA, DELTA, GAMMA, Q = 0.05, 0.15, 0.01, 0.07, 100.0


@pytest.fixture
def market():
    return MarketParams(r=R, sigma=SIGMA, delta=DELTA)


@pytest.fixture
def roots(market):
    return compute_roots(market, GAMMA)


@pytest.fixture
def basic_terms():
    return LoanTerms(q=Q, gamma=GAMMA, a=50.0)


@pytest.fixture
def capped_terms():
    return LoanTerms(q=Q, gamma=GAMMA, a=10.0, L=240.0, k=0.5)


@pytest.fixture
def quick_mc():
    """Reduced run for the default suite; the slow tests use the full size."""
    return SimConfig(n_paths=20_000, dt=0.01, horizon=200.0, seed=20240917, block_size=8192)


@pytest.fixture
def full_mc():
    return SimConfig(n_paths=200_000, dt=1.0 / 2000.0, horizon=200.0, seed=20240917, workers=4)
