"""
Monte Carlo oracle for the stock loan value.

Simulates the discounted price S~_t = e^(-gamma t) S_t with exact log-normal
steps and stops each path at threshold rules. Paths far from every barrier
move up to MAX_STRIDE steps of ``dt`` at once; near a barrier they move one
step at a time, and with ``bridge_correction`` on the Brownian-bridge
extremes of that step decide whether it crossed.

Paths are grouped in blocks of ``block_size``; block i draws from its own
counter-based Philox stream (key = seed, counter = i), so estimates do not
depend on how many workers run the blocks. Partial moments are combined in
block order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, SimConfigError
from .models import LoanTerms, MarketParams

logger = logging.getLogger(__name__)

NEVER = np.iinfo(np.int64).max
# A move of s fine steps needs the nearest barrier COARSE_SIGMAS·σ√(s·dt) plus the
# drift of the move away; crossing inside it has probability below 2·P(Z > 8) ≈ 1e-15.
COARSE_SIGMAS = 8.0
MAX_STRIDE = 4096


@dataclass(frozen=True)
class SimConfig:
    n_paths: int
    dt: float
    horizon: float
    seed: int
    bridge_correction: bool = True
    block_size: int = 65_536
    workers: int = 1
    censor_warning_ratio: float = 1e-3

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise SimConfigError(f"n_paths ≥ 1 required (n_paths={self.n_paths})")
        if not self.dt > 0:
            raise SimConfigError(f"dt > 0 required (dt={self.dt})")
        if not self.horizon >= 100 * self.dt:
            raise SimConfigError(f"horizon ≥ 100·dt required (horizon={self.horizon}, dt={self.dt})")
        if not 0 <= int(self.seed) < 2**64:
            raise SimConfigError(f"seed must be a 64-bit unsigned integer (seed={self.seed})")
        if self.block_size < 1 or self.workers < 1:
            raise SimConfigError("block_size and workers must be positive")

    @property
    def n_steps(self):
        return int(math.ceil(self.horizon / self.dt - 1e-9))

    @property
    def n_blocks(self):
        return -(-self.n_paths // self.block_size)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    n_censored: int
    seed: int
    horizon_warning: bool = False

    @property
    def censored_ratio(self):
        return self.n_censored / self.n_paths

    def agrees_with(self, value, sigmas=3.0, extra_stderr=0.0):
        """True when ``value`` lies within ``sigmas`` combined standard errors."""
        band = sigmas * math.hypot(self.stderr, extra_stderr)
        return abs(self.mean - value) <= band

    def __str__(self):
        return f"{self.mean:.6f} ± {self.stderr:.6f} ({self.n_paths} paths, {self.n_censored} censored)"


@dataclass(frozen=True)
class StoppingRule:
    """
    Stop at the first of τ_a, τ_b, τ_L.

    Redemption pays (S~_τ ∧ L − q)+, termination pays k·S~_τa. ``b`` and ``L``
    default to ``inf`` (no such barrier).
    """

    a: float
    q: float
    b: float = math.inf
    L: float = math.inf
    k: float = 0.0

    @classmethod
    def for_terms(cls, terms: LoanTerms, b: float):
        return cls(a=terms.a, q=terms.q, b=b, L=terms.cap, k=terms.k)

    @property
    def upper(self):
        return min(self.b, self.L)


@dataclass
class GridSearchResult:
    candidates: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    estimates: list = field(default_factory=list)

    @property
    def best_index(self):
        return int(np.argmax(self.means))

    @property
    def best_b(self):
        return float(self.candidates[self.best_index])


@dataclass(frozen=True)
class _Problem:
    """Log-space barriers and stopped payoffs shared by all blocks."""

    log_s0: float
    log_low: float
    levels: np.ndarray  # sorted log upper levels
    upper_hit: np.ndarray
    upper_start: np.ndarray
    lower_hit: float
    lower_start: float
    drift: float
    sigma: float
    rate: float  # discount e^(rate*τ)


def _problem(s0, m, gamma, *, low, levels, upper_hit, upper_start, lower_hit, lower_start, rate):
    levels = np.asarray(levels, dtype=float)
    order = np.argsort(levels, kind='stable')
    return _Problem(
        log_s0=math.log(s0),
        log_low=math.log(low) if low > 0 else -math.inf,
        levels=np.log(levels[order]),
        upper_hit=np.asarray(upper_hit, dtype=float)[order],
        upper_start=np.asarray(upper_start, dtype=float)[order],
        lower_hit=float(lower_hit),
        lower_start=float(lower_start),
        drift=m.r - m.delta - gamma - 0.5 * m.sigma**2,
        sigma=m.sigma,
        rate=rate,
    ), order


def _strides(gap, sd, drift_step, remaining):
    """
    Fine steps per move: the largest power of two s with
    COARSE_SIGMAS·sd·√s + |drift_step|·s ≤ gap, capped by MAX_STRIDE and the
    steps left before the horizon.
    """
    reach = COARSE_SIGMAS * sd
    with np.errstate(invalid='ignore'):
        root = 2.0 * gap / (reach + np.sqrt(reach * reach + 4.0 * abs(drift_step) * gap))
    root = np.where(np.isfinite(gap), root, np.inf)
    exponent = np.floor(np.log2(np.clip(root * root, 1.0, MAX_STRIDE)))
    return np.minimum(np.exp2(exponent).astype(np.int64), remaining)


def _simulate_block(index, n, problem: _Problem, cfg: SimConfig):
    """
    First-passage steps of one block: (low_step (n,), up_step (n, J)).

    A path far from both barriers moves several fine steps at once; within
    COARSE_SIGMAS deviations of a barrier it moves one dt at a time and the
    bridge extremes of that step decide the crossing.
    """
    levels = problem.levels
    n_levels = levels.size
    up_step = np.full((n, n_levels), NEVER, dtype=np.int64)
    low_step = np.full(n, NEVER, dtype=np.int64)

    x0 = problem.log_s0
    log_low = problem.log_low
    if x0 <= log_low:
        low_step[:] = 0
        return low_step, up_step
    n_start = int(np.searchsorted(levels, x0, side='right'))
    up_step[:, :n_start] = 0
    if n_start == n_levels:
        return low_step, up_step

    rng = np.random.Generator(np.random.Philox(key=cfg.seed, counter=[0, 0, 0, index]))
    sd = problem.sigma * math.sqrt(cfg.dt)
    mean_step = problem.drift * cfg.dt
    two_var = 2.0 * problem.sigma**2 * cfg.dt
    n_steps = cfg.n_steps

    ids = np.arange(n)
    x = np.full(n, x0)
    t = np.zeros(n, dtype=np.int64)
    nxt = np.full(n, n_start)
    moves = 0
    while ids.size:
        gap = np.minimum(x - log_low, levels[nxt] - x)
        stride = _strides(gap, sd, mean_step, n_steps - t)
        new = x + mean_step * stride + sd * np.sqrt(stride) * rng.standard_normal(ids.size)
        hi = np.maximum(x, new)
        lo = np.minimum(x, new)
        if cfg.bridge_correction:
            rows = np.flatnonzero(stride == 1)
            if rows.size:
                u = rng.random((2, rows.size))
                spread = (new[rows] - x[rows]) ** 2
                mid = x[rows] + new[rows]
                hi[rows] = 0.5 * (mid + np.sqrt(spread - two_var * np.log1p(-u[0])))
                lo[rows] = 0.5 * (mid - np.sqrt(spread - two_var * np.log1p(-u[1])))
        t = t + stride

        low_hit = lo <= log_low
        reached = np.maximum(np.searchsorted(levels, hi, side='right'), nxt)
        if low_hit.any():
            # Both barriers inside one step: levels nearer than the floor count as hit first.
            nearer = np.searchsorted(levels, 2.0 * x - log_low, side='left')
            reached = np.where(low_hit, np.maximum(np.minimum(reached, nearer), nxt), reached)
        rows = np.flatnonzero(reached > nxt)
        for j in range(int(nxt[rows].min(initial=n_levels)), int(reached[rows].max(initial=0))):
            crossed = rows[(nxt[rows] <= j) & (j < reached[rows])]
            up_step[ids[crossed], j] = t[crossed]

        top = reached == n_levels
        stopped_low = low_hit & ~top
        low_step[ids[stopped_low]] = t[stopped_low]
        alive = ~top & ~stopped_low & (t < n_steps)
        ids, x, t, nxt = ids[alive], new[alive], t[alive], reached[alive]
        moves += 1
    logger.debug("Block %d: %d paths simulated in %d moves", index, n, moves)
    return low_step, up_step


def _block_moments(index, n, problem, cfg):
    low_step, up_step = _simulate_block(index, n, problem, cfg)
    dt = cfg.dt
    low = low_step[:, None]
    up_first = (up_step != NEVER) & (up_step <= low)
    low_first = (low != NEVER) & ~up_first
    censored = ~up_first & ~low_first

    up_time = np.where(up_first, up_step, 0) * dt
    low_time = np.where(low_first, low, 0) * dt
    up_value = np.where(up_step == 0, problem.upper_start, problem.upper_hit)
    low_value = np.where(low == 0, problem.lower_start, problem.lower_hit)
    payoff = np.where(up_first, np.exp(problem.rate * up_time) * up_value, 0.0)
    payoff = payoff + np.where(low_first, np.exp(problem.rate * low_time) * low_value, 0.0)

    mean = payoff.mean(axis=0)
    m2 = ((payoff - mean) ** 2).sum(axis=0)
    return n, mean, m2, censored.sum(axis=0)


def _run(problem: _Problem, cfg: SimConfig):
    sizes = [min(cfg.block_size, cfg.n_paths - i * cfg.block_size) for i in range(cfg.n_blocks)]
    tasks = list(enumerate(sizes))

    def work(task):
        return _block_moments(task[0], task[1], problem, cfg)

    if cfg.workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, tasks))
    else:
        parts = [work(task) for task in tasks]

    count, mean, m2, censored = parts[0]
    mean, m2, censored = mean.copy(), m2.copy(), censored.copy()
    for n_b, mean_b, m2_b, cens_b in parts[1:]:
        total = count + n_b
        diff = mean_b - mean
        mean = mean + diff * (n_b / total)
        m2 = m2 + m2_b + diff * diff * (count * n_b / total)
        censored = censored + cens_b
        count = total
    var = m2 / (count - 1) if count > 1 else np.zeros_like(m2)
    return mean, np.sqrt(var / count), censored


def _estimate(mean, stderr, censored, cfg, label):
    ratio = censored / cfg.n_paths
    warn = bool(ratio > cfg.censor_warning_ratio)
    if warn:
        logger.warning(
            "%s: %d of %d paths reached the %.1f-year horizon unstopped",
            label,
            censored,
            cfg.n_paths,
            cfg.horizon,
        )
    return MCEstimate(
        mean=float(mean),
        stderr=float(stderr),
        n_paths=cfg.n_paths,
        n_censored=int(censored),
        seed=int(cfg.seed),
        horizon_warning=warn,
    )


def _upper_values(s0, level, rule):
    hit = max(min(level, rule.L) - rule.q, 0.0)
    start = max(min(s0, rule.L) - rule.q, 0.0)
    return hit, start


def estimate_rule_value(
    rule: StoppingRule, s0: float, m: MarketParams, gamma: float, cfg: SimConfig
) -> MCEstimate:
    """Expected discounted stopped payoff under ``rule``, discounting by e^(−r̃τ)."""
    upper = rule.upper
    hit, start = _upper_values(s0, upper, rule) if math.isfinite(upper) else (0.0, 0.0)
    problem, _ = _problem(
        s0,
        m,
        gamma,
        low=rule.a,
        levels=[upper],
        upper_hit=[hit],
        upper_start=[start],
        lower_hit=rule.k * rule.a,
        lower_start=rule.k * s0,
        rate=gamma - m.r,
    )
    mean, stderr, censored = _run(problem, cfg)
    return _estimate(mean[0], stderr[0], censored[0], cfg, 'rule value')



def grid_search_threshold(
    candidate_bs, s0: float, m: MarketParams, gamma: float, terms: LoanTerms, cfg: SimConfig
) -> GridSearchResult:
    """
    Value of τ_a ∧ τ_c ∧ τ_L for every candidate threshold c on common paths.

    Each path is simulated once; the first time its running maximum reaches
    each candidate gives that candidate's stopping time.
    """
    candidates = np.atleast_1d(np.asarray(candidate_bs, dtype=float))
    if candidates.size == 0 or np.any(candidates <= 0):
        raise DomainError("candidate thresholds must be a nonempty set of positive levels")
    rules = [StoppingRule.for_terms(terms, c) for c in candidates]
    uppers = [rule.upper for rule in rules]
    values = [_upper_values(s0, u, rule) for u, rule in zip(uppers, rules)]
    problem, order = _problem(
        s0,
        m,
        gamma,
        low=terms.a,
        levels=uppers,
        upper_hit=[v[0] for v in values],
        upper_start=[v[1] for v in values],
        lower_hit=terms.k * terms.a,
        lower_start=terms.k * s0,
        rate=gamma - m.r,
    )
    mean_sorted, stderr_sorted, censored_sorted = _run(problem, cfg)
    means = np.empty_like(mean_sorted)
    stderrs = np.empty_like(stderr_sorted)
    censored = np.empty_like(censored_sorted)
    means[order] = mean_sorted
    stderrs[order] = stderr_sorted
    censored[order] = censored_sorted
    estimates = [
        _estimate(means[i], stderrs[i], censored[i], cfg, f"threshold {candidates[i]:.6g}")
        for i in range(candidates.size)
    ]
    result = GridSearchResult(candidates=candidates, means=means, stderrs=stderrs, estimates=estimates)
    logger.debug("Grid search over %d thresholds: best %.6g", candidates.size, result.best_b)
    return result


def estimate_hitting_laplace(
    a: float, b: float, s0: float, lam: float, m: MarketParams, gamma: float, cfg: SimConfig
) -> MCEstimate:
    """E[e^(λτ_b) 1{τ_b < τ_a}]; paths censored at the horizon contribute 0."""
    if not 0 < a < b:
        raise DomainError(f"0 < a < b required (a={a}, b={b})")
    problem, _ = _problem(
        s0,
        m,
        gamma,
        low=a,
        levels=[b],
        upper_hit=[1.0],
        upper_start=[1.0],
        lower_hit=0.0,
        lower_start=0.0,
        rate=lam,
    )
    mean, stderr, censored = _run(problem, cfg)
    return _estimate(mean[0], stderr[0], censored[0], cfg, 'hitting transform')


def estimate_cap_reentry(
    s0: float, L: float, q: float, m: MarketParams, gamma: float, cfg: SimConfig
) -> MCEstimate:
    """Value, from S~_0 > L, of waiting for S~ to fall back to L and redeeming for L − q."""
    if not s0 > L:
        raise DomainError(f"S0 > L required (S0={s0}, L={L})")
    problem, _ = _problem(
        s0,
        m,
        gamma,
        low=L,
        levels=[math.inf],
        upper_hit=[0.0],
        upper_start=[0.0],
        lower_hit=L - q,
        lower_start=L - q,
        rate=gamma - m.r,
    )
    mean, stderr, censored = _run(problem, cfg)
    return _estimate(mean[0], stderr[0], censored[0], cfg, 'cap re-entry')
