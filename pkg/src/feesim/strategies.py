"""Best-response fee strategies against mempool-oblivious bidders.

Three strategies are evaluated for a single strategic bidder competing for
one of ``m`` block slots against ordinary users whose fees are i.i.d. draws
from the scenario's fee distribution:

* ``nbr``  - fee chosen from the elapsed time alone, broadcast immediately;
* ``ibr``  - fee chosen from the observed mempool, broadcast immediately;
* ``fbr``  - fee and broadcast time chosen jointly.  Under a memoryless
  interval delaying never helps, so the decision collapses to ``ibr``;
  under a fixed interval the bidder waits until the deadline and pays the
  final inclusion threshold plus one currency tick.

Success probabilities marginalize the competitor count over the residual
block-interval law.  Counts of competitors *above* a fee level have simple
exact laws (binomial / Poisson / geometric thinning), which is what the
production evaluators use; a literal truncated-series evaluator and the
fully closed memoryless forms are kept alongside as cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special as sp

from .errors import DomainError, InvalidStateError
from .model import (
    EmpiricalFees,
    ExponentialInterval,
    FixedInterval,
    LinearArrivals,
    MempoolSnapshot,
    ParetoFees,
    Scenario,
    count_above,
    fee_quantile,
    fee_sample,
    fee_survival,
)

__all__ = [
    "StrategyDecision",
    "CurvePoint",
    "nbr_success_prob",
    "nbr_success_prob_series",
    "nbr_success_prob_closed_form",
    "nbr_optimize",
    "ibr_success_prob",
    "ibr_success_prob_series",
    "ibr_success_prob_closed_form",
    "ibr_optimize",
    "fbr_decide",
    "pos_wait_expected_utility",
    "fbr_wait_decision",
    "delayed_success_prob",
    "expected_threshold_fee",
    "baseline_decision",
    "utility_vs_elapsed_curve",
]

GRID_POINTS = 512
SERIES_TAIL = 1e-10
_QUAD_NODES = 2048


@dataclass(frozen=True)
class StrategyDecision:
    """A strategy's chosen fee and broadcast time with its evaluation.

    For the wait-to-deadline policy the paid fee is random (final
    threshold plus one tick), so ``fee`` records the expected payment
    conditional on inclusion.
    """

    fee: float
    broadcast_time: float
    expected_utility: float
    inclusion_probability: float


@dataclass(frozen=True)
class CurvePoint:
    elapsed: float
    utility: float
    fee: float
    win_probability: float


# ---------------------------------------------------------------------------
# Win probabilities
#
# All evaluators work with p = P(single competitor fee > b) and the number
# of free slots s.  The bidder wins iff fewer than s competitors end up
# above b.  Competitors above b obey:
#   fixed interval, linear arrivals   : Binomial(count, p)
#   fixed interval, Poisson arrivals  : Poisson(rate * window * p)
#   memoryless interval               : past-above + Geometric(r) where the
#       future count over the exponential residual is geometric with
#       q = beta / (lambda + beta) and thinning by p gives
#       r = q p / (1 - q (1 - p)).
# ---------------------------------------------------------------------------


def _binom_cdf(k, n, p):
    """P(Binomial(n, p) <= k) for k possibly >= n, vectorized."""
    k_arr = np.asarray(k)
    p_arr = np.asarray(p, dtype=float)
    full = k_arr >= n
    k_safe = np.where(full, 0, k_arr)
    with np.errstate(all="ignore"):
        out = sp.bdtr(k_safe, n, p_arr)
    return np.where(full, 1.0, out)


def _binom_pmf_matrix(i, n, p):
    """pmf of Binomial(n, p) at the column vector i against fee grid p."""
    i = i[:, None]
    p = np.asarray(p, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logpmf = (
            sp.gammaln(n + 1)
            - sp.gammaln(i + 1)
            - sp.gammaln(n - i + 1)
            + i * np.log(p)
            + (n - i) * np.log1p(-p)
        )
        pmf = np.exp(logpmf)
    pmf = np.where(np.isnan(pmf), 0.0, pmf)
    # p == 0 or p == 1 degenerate columns
    pmf = np.where((p == 0.0), (i == 0).astype(float), pmf)
    pmf = np.where((p == 1.0), (i == n).astype(float), pmf)
    return pmf


def _poisson_pmf_matrix(i, mu):
    """pmf of Poisson(mu) at column vector i; mu is a row vector."""
    i = i[:, None]
    mu = np.asarray(mu, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logpmf = i * np.log(mu) - mu - sp.gammaln(i + 1)
        pmf = np.exp(logpmf)
    return np.where(mu == 0.0, (i == 0).astype(float), pmf)


def _geometric_tail_powers(r, exponents):
    """r ** e for the column vector of exponents, safe at r == 0."""
    r = np.asarray(r, dtype=float)[None, :]
    e = exponents[:, None]
    with np.errstate(divide="ignore"):
        out = np.exp(e * np.log(np.where(r > 0.0, r, 1.0)))
    return np.where(r > 0.0, out, 0.0)


def _memoryless_q(scenario: Scenario) -> float:
    lam = scenario.interval.rate
    beta = scenario.arrivals.rate
    return beta / (lam + beta)


def _win_prob_memoryless(scenario: Scenario, elapsed: float, p, slots: int,
                         observed: bool):
    """Win probability under the exponential interval.

    ``observed=False`` folds in the unobserved arrivals accumulated over
    [0, elapsed]; ``observed=True`` counts future arrivals only (the
    pending ones are handled by the caller through the slot count).
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if slots <= 0:
        return np.zeros_like(p)
    q = _memoryless_q(scenario)
    r = q * p / (1.0 - q * (1.0 - p))
    if observed or elapsed == 0.0:
        return 1.0 - r**slots
    i = np.arange(slots)
    if isinstance(scenario.arrivals, LinearArrivals):
        n0 = scenario.arrivals.count(elapsed)
        past = _binom_pmf_matrix(i, n0, p)
    else:
        past = _poisson_pmf_matrix(i, scenario.arrivals.rate * elapsed * p)
    tail = _geometric_tail_powers(r, slots - i)
    return np.einsum("ij,ij->j", past, 1.0 - tail)


def _win_prob_fixed(scenario: Scenario, window: float, p, slots: int):
    """Win probability under the fixed interval for arrivals over ``window``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if slots <= 0:
        return np.zeros_like(p)
    if isinstance(scenario.arrivals, LinearArrivals):
        n = scenario.arrivals.count(window)
        return _binom_cdf(slots - 1, n, p)
    mu = scenario.arrivals.rate * window
    return sp.pdtr(slots - 1, mu * p)


def _win_prob(scenario: Scenario, elapsed: float, fee, slots: int,
              observed: bool):
    """Dispatch on the interval law; ``fee`` may be a scalar or array."""
    fee_arr = np.atleast_1d(np.asarray(fee, dtype=float))
    p = fee_survival(scenario.fees, fee_arr)
    if isinstance(scenario.interval, ExponentialInterval):
        out = _win_prob_memoryless(scenario, elapsed, p, slots, observed)
    else:
        duration = scenario.interval.duration
        if elapsed >= duration:
            raise InvalidStateError(
                f"block already due: elapsed {elapsed} >= duration {duration}"
            )
        window = duration - elapsed if observed else duration
        out = _win_prob_fixed(scenario, window, p, slots)
    out = np.clip(out, 0.0, 1.0)
    return out


def _check_fee(scenario: Scenario, fee: float) -> None:
    if fee < 0 or fee > scenario.valuation:
        raise DomainError(
            f"fee must lie in [0, valuation={scenario.valuation}], got {fee}"
        )


def _check_elapsed(scenario: Scenario, elapsed: float) -> None:
    if elapsed < 0:
        raise DomainError(f"elapsed time must be nonnegative, got {elapsed}")
    if isinstance(scenario.interval, FixedInterval) and elapsed >= scenario.interval.duration:
        raise InvalidStateError(
            f"block already due: elapsed {elapsed} >= duration "
            f"{scenario.interval.duration}"
        )


def nbr_success_prob(scenario: Scenario, elapsed: float, fee: float) -> float:
    """Probability that a fee chosen without observing the mempool wins a
    slot, given the time elapsed since the last block."""
    _check_elapsed(scenario, elapsed)
    _check_fee(scenario, fee)
    return float(_win_prob(scenario, elapsed, fee, scenario.capacity, observed=False)[0])


def ibr_success_prob(scenario: Scenario, pool: MempoolSnapshot, fee: float, *,
                     count_ties: bool = False) -> float:
    """Probability that ``fee`` wins a slot given the observed mempool.

    Pending fees above ``fee`` consume slots outright; only future
    arrivals over the residual interval compete for the remainder.
    """
    _check_elapsed(scenario, pool.elapsed)
    _check_fee(scenario, fee)
    slots = scenario.capacity - count_above(pool, fee, count_ties=count_ties)
    if slots <= 0:
        return 0.0
    return float(_win_prob(scenario, pool.elapsed, fee, slots, observed=True)[0])


# ---------------------------------------------------------------------------
# Truncated-series reference evaluators
# ---------------------------------------------------------------------------


def _geometric_weights(q: float, tail: float) -> np.ndarray:
    if q == 0.0:
        return np.array([1.0])
    kmax = int(math.ceil(math.log(tail) / math.log(q)))
    k = np.arange(kmax + 1)
    return (1.0 - q) * q**k


def _poisson_weights(mu: float, tail: float) -> np.ndarray:
    if mu == 0.0:
        return np.array([1.0])
    kmax = int(mu + 12.0 * math.sqrt(mu) + 30.0)
    k = np.arange(kmax + 1)
    w = np.exp(k * math.log(mu) - mu - sp.gammaln(k + 1))
    # extend in the unlikely case the tail bound is not yet met
    while w.sum() < 1.0 - tail:
        kmax *= 2
        k = np.arange(kmax + 1)
        w = np.exp(k * math.log(mu) - mu - sp.gammaln(k + 1))
    return w


def _competitor_count_weights(scenario: Scenario, elapsed: float,
                              observed: bool, tail: float) -> np.ndarray:
    """Distribution of the total competitor count at block time, truncated
    once the omitted tail is below ``tail``.  Index = count."""
    if isinstance(scenario.interval, ExponentialInterval):
        geom = _geometric_weights(_memoryless_q(scenario), tail)
        if observed or elapsed == 0.0:
            return geom
        if isinstance(scenario.arrivals, LinearArrivals):
            n0 = scenario.arrivals.count(elapsed)
            return np.concatenate([np.zeros(n0), geom])
        past = _poisson_weights(scenario.arrivals.rate * elapsed, tail)
        return np.convolve(past, geom)
    window = scenario.interval.duration - (elapsed if observed else 0.0)
    if isinstance(scenario.arrivals, LinearArrivals):
        n = scenario.arrivals.count(window)
        w = np.zeros(n + 1)
        w[n] = 1.0
        return w
    return _poisson_weights(scenario.arrivals.rate * window, tail)


def _series_win_prob(weights: np.ndarray, p: float, slots: int) -> float:
    if slots <= 0:
        return 0.0
    n = np.arange(len(weights))
    inner = _binom_cdf(slots - 1, n, np.full(len(weights), p))
    return float(weights @ inner)


def nbr_success_prob_series(scenario: Scenario, elapsed: float, fee: float, *,
                            tail: float = SERIES_TAIL) -> float:
    """Literal truncated-sum evaluation of the unobserved-mempool win
    probability; the reference the fast evaluator is checked against."""
    _check_elapsed(scenario, elapsed)
    _check_fee(scenario, fee)
    p = float(fee_survival(scenario.fees, fee))
    weights = _competitor_count_weights(scenario, elapsed, False, tail)
    return _series_win_prob(weights, p, scenario.capacity)


def ibr_success_prob_series(scenario: Scenario, pool: MempoolSnapshot, fee: float, *,
                            count_ties: bool = False,
                            tail: float = SERIES_TAIL) -> float:
    """Literal truncated-sum evaluation of the observed-mempool win
    probability."""
    _check_elapsed(scenario, pool.elapsed)
    _check_fee(scenario, fee)
    slots = scenario.capacity - count_above(pool, fee, count_ties=count_ties)
    if slots <= 0:
        return 0.0
    p = float(fee_survival(scenario.fees, fee))
    weights = _competitor_count_weights(scenario, pool.elapsed, True, tail)
    return _series_win_prob(weights, p, slots)


# ---------------------------------------------------------------------------
# Closed memoryless forms (cross-checks only)
# ---------------------------------------------------------------------------


def _closed_ratio(scenario: Scenario, fee: float) -> float:
    q = _memoryless_q(scenario)
    cdf = float(1.0 - fee_survival(scenario.fees, fee))
    return (q - q * cdf) / (1.0 - q * cdf)


def nbr_success_prob_closed_form(scenario: Scenario, elapsed: float, fee: float) -> float:
    """Closed form for the memoryless interval with linear arrivals: the
    geometric competitor count conditioned on the arrivals already in by
    ``elapsed``, summed through the geometric-binomial identity."""
    if not isinstance(scenario.interval, ExponentialInterval):
        raise DomainError("closed form applies to the exponential interval only")
    if not isinstance(scenario.arrivals, LinearArrivals):
        raise DomainError("closed form applies to linear arrivals only")
    _check_fee(scenario, fee)
    m = scenario.capacity
    q = _memoryless_q(scenario)
    r = _closed_ratio(scenario, fee)
    n0 = scenario.arrivals.count(elapsed)
    p = float(fee_survival(scenario.fees, fee))
    head = 0.0
    if n0 > 0:
        n = np.arange(n0)
        inner = _binom_cdf(m - 1, n, np.full(n0, p))
        head = float(((1.0 - q) * q**n) @ inner)
    return (1.0 - r**m - head) / q**n0


def ibr_success_prob_closed_form(scenario: Scenario, pool: MempoolSnapshot,
                                 fee: float) -> float:
    """Closed form 1 - ((q - qF)/(1 - qF))**slots for the memoryless
    interval, either arrival process."""
    if not isinstance(scenario.interval, ExponentialInterval):
        raise DomainError("closed form applies to the exponential interval only")
    _check_fee(scenario, fee)
    slots = scenario.capacity - count_above(pool, fee)
    if slots <= 0:
        return 0.0
    return 1.0 - _closed_ratio(scenario, fee) ** slots


# ---------------------------------------------------------------------------
# Fee optimization: coarse grid then golden-section refinement, per
# continuity piece.  Pending fees are jump points of the observed-mempool
# objective; each piece is closed on the left, and the supremum towards an
# open right end is dominated by the next piece's left endpoint.
# ---------------------------------------------------------------------------

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _distribution_edges(scenario: Scenario) -> list[float]:
    """Fee levels where the fee law itself kinks or jumps.  An empirical
    law makes the win probability a step function of the fee, so its atoms
    are candidate maximizers in their own right."""
    fees = scenario.fees
    if isinstance(fees, EmpiricalFees):
        return list(dict.fromkeys(fees.samples))
    if isinstance(fees, ParetoFees):
        return [fees.minimum]
    return [fees.lo, fees.hi]


def _golden_max(f, lo: float, hi: float, tol: float = 1e-9) -> tuple[float, float]:
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
    x = 0.5 * (a + b)
    return x, f(x)


def _optimize_pieces(scenario: Scenario, pieces, eval_vec, eval_scalar,
                     grid_points: int) -> tuple[float, float]:
    """Maximize utility over left-closed fee pieces.

    ``pieces`` yields (lo, hi, context); ``eval_vec``/``eval_scalar``
    evaluate the utility given a context.  Returns (fee, utility).
    """
    V = scenario.valuation
    best_fee, best_util = 0.0, -np.inf
    best_bracket = None
    for lo, hi, ctx in pieces:
        width = hi - lo
        k = max(8, int(grid_points * width / V)) if width > 0 else 1
        grid = np.linspace(lo, hi, k)
        utils = eval_vec(grid, ctx)
        i = int(np.argmax(utils))
        if utils[i] > best_util:
            best_util = float(utils[i])
            best_fee = float(grid[i])
            bl = grid[max(i - 1, 0)]
            bh = grid[min(i + 1, k - 1)]
            best_bracket = (float(bl), float(bh), ctx)
    if best_bracket is not None and best_bracket[1] > best_bracket[0]:
        lo, hi, ctx = best_bracket
        fee, util = _golden_max(lambda b: eval_scalar(b, ctx), lo, hi)
        if util > best_util:
            best_fee, best_util = fee, util
    return best_fee, max(best_util, 0.0)


def _piece_bounds(scenario: Scenario, pending=()) -> list[float]:
    V = scenario.valuation
    edges = {f for f in pending if 0.0 < f < V}
    edges.update(e for e in _distribution_edges(scenario) if 0.0 < e < V)
    return [0.0, *sorted(edges), V]


def nbr_optimize(scenario: Scenario, elapsed: float, *,
                 grid_points: int = GRID_POINTS) -> StrategyDecision:
    """Maximize (valuation - fee) * win_probability over the fee axis
    without mempool information; broadcast is immediate."""
    _check_elapsed(scenario, elapsed)
    V = scenario.valuation
    m = scenario.capacity

    def eval_vec(b, _ctx):
        return (V - b) * _win_prob(scenario, elapsed, b, m, observed=False)

    def eval_scalar(b, _ctx):
        return float(eval_vec(np.array([b]), _ctx)[0])

    bounds = _piece_bounds(scenario)
    pieces = [(lo, hi, None) for lo, hi in zip(bounds[:-1], bounds[1:])]
    fee, util = _optimize_pieces(scenario, pieces, eval_vec, eval_scalar, grid_points)
    win = float(_win_prob(scenario, elapsed, fee, m, observed=False)[0])
    return StrategyDecision(fee, elapsed, util, win)


def _ibr_pieces(scenario: Scenario, pool: MempoolSnapshot):
    m = scenario.capacity
    bounds = _piece_bounds(scenario, pool.fees)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        slots = m - count_above(pool, lo)
        if slots > 0:
            yield lo, hi, slots


def ibr_optimize(scenario: Scenario, pool: MempoolSnapshot, *,
                 grid_points: int = GRID_POINTS) -> StrategyDecision:
    """Maximize expected utility over the fee axis given the observed
    mempool; broadcast is immediate.

    The objective jumps upward wherever the fee crosses a pending fee
    (one fewer competitor above), so each piece between pending fees is
    searched separately.
    """
    _check_elapsed(scenario, pool.elapsed)
    V = scenario.valuation

    def eval_vec(b, slots):
        return (V - b) * _win_prob(scenario, pool.elapsed, b, slots, observed=True)

    def eval_scalar(b, slots):
        return float(eval_vec(np.array([b]), slots)[0])

    pieces = list(_ibr_pieces(scenario, pool))
    if not pieces:
        # every slot is already taken by a pending fee above the valuation
        return StrategyDecision(0.0, pool.elapsed, 0.0, 0.0)
    fee, util = _optimize_pieces(scenario, pieces, eval_vec, eval_scalar, grid_points)
    win = ibr_success_prob(scenario, pool, fee)
    return StrategyDecision(fee, pool.elapsed, util, win)


# ---------------------------------------------------------------------------
# Wait-to-deadline policy (fixed interval)
# ---------------------------------------------------------------------------


def _threshold_cdf_fn(scenario: Scenario, pool_fees, window: float):
    """CDF of the final inclusion threshold: the m-th largest fee among the
    pending ones plus the arrivals over ``window``."""
    m = scenario.capacity
    pending = np.sort(np.asarray(pool_fees, dtype=float))

    def cdf(u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        above = len(pending) - np.searchsorted(pending, u, side="right")
        c = m - 1 - above
        p = fee_survival(scenario.fees, u)
        ok = c >= 0
        c_safe = np.where(ok, c, 0)
        if isinstance(scenario.arrivals, LinearArrivals):
            n = scenario.arrivals.count(window)
            out = _binom_cdf(c_safe, n, p)
        else:
            mu = scenario.arrivals.rate * window
            out = sp.pdtr(c_safe, mu * p)
        return np.where(ok, out, 0.0)

    return cdf


def _piecewise_gauss_legendre(fn, lo: float, hi: float, knots,
                              total_nodes: int = _QUAD_NODES) -> float:
    """Integrate fn over [lo, hi] with Gauss-Legendre panels split at the
    interior knots, where the integrand may kink or jump."""
    if hi <= lo:
        return 0.0
    cuts = sorted({lo, hi, *(k for k in knots if lo < k < hi)})
    panels = list(zip(cuts[:-1], cuts[1:]))
    nodes_per = max(32, total_nodes // max(len(panels), 1))
    x0, w0 = np.polynomial.legendre.leggauss(nodes_per)
    total = 0.0
    for a, b in panels:
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        total += half * float(w0 @ fn(mid + half * x0))
    return total


def fbr_wait_decision(scenario: Scenario, pool: MempoolSnapshot,
                      elapsed: float | None = None) -> StrategyDecision:
    """Wait until the fixed deadline and pay the final threshold plus one
    tick; abstain when that exceeds the valuation.

    The expected utility integrates the threshold CDF: with T the final
    threshold, E[max(V - T - tick, 0)] = integral of P(T <= u) over
    u in [0, V - tick].
    """
    if not isinstance(scenario.interval, FixedInterval):
        raise DomainError("the wait-to-deadline policy needs a fixed interval")
    if elapsed is None:
        elapsed = pool.elapsed
    duration = scenario.interval.duration
    if elapsed >= duration:
        raise InvalidStateError(
            f"block already due: elapsed {elapsed} >= duration {duration}"
        )
    V = scenario.valuation
    eps = scenario.tick
    window = duration - elapsed
    cdf = _threshold_cdf_fn(scenario, pool.fees, window)
    knots = [f for f in pool.fees] + _distribution_edges(scenario)
    util = _piecewise_gauss_legendre(cdf, 0.0, V - eps, knots)
    win = float(cdf(V - eps)[0])
    fee = V - util / win if win > 0 else V
    return StrategyDecision(fee, duration, util, win)


def pos_wait_expected_utility(scenario: Scenario, pool: MempoolSnapshot,
                              elapsed: float | None = None) -> float:
    """Expected utility of waiting until the fixed deadline (see
    :func:`fbr_wait_decision`)."""
    return fbr_wait_decision(scenario, pool, elapsed).expected_utility


def fbr_decide(scenario: Scenario, pool: MempoolSnapshot,
               elapsed: float | None = None) -> StrategyDecision:
    """Jointly optimal fee and broadcast time.

    Memoryless interval: delaying only lets more competitors in, so the
    decision is the observed-mempool optimum broadcast immediately.  Fixed
    interval: wait until the deadline and pay threshold plus tick.
    """
    if elapsed is not None and elapsed != pool.elapsed:
        pool = replace(pool, elapsed=elapsed)
    if isinstance(scenario.interval, ExponentialInterval):
        return ibr_optimize(scenario, pool)
    return fbr_wait_decision(scenario, pool)


def delayed_success_prob(scenario: Scenario, pool: MempoolSnapshot, fee: float,
                         extra_time: float) -> float:
    """Win probability of broadcasting ``fee`` after an extra delay under
    the memoryless interval, averaging over the interim arrivals that the
    delay lets into the mempool."""
    if not isinstance(scenario.interval, ExponentialInterval):
        raise DomainError("delayed evaluation applies to the exponential interval")
    if extra_time < 0:
        raise DomainError(f"delay must be nonnegative, got {extra_time}")
    _check_fee(scenario, fee)
    slots = scenario.capacity - count_above(pool, fee)
    if slots <= 0:
        return 0.0
    p = float(fee_survival(scenario.fees, fee))
    r = _closed_ratio(scenario, fee)
    j = np.arange(slots)
    if isinstance(scenario.arrivals, LinearArrivals):
        extra = scenario.arrivals.count(pool.elapsed + extra_time) - scenario.arrivals.count(pool.elapsed)
        pmf = _binom_pmf_matrix(j, extra, np.array([p]))[:, 0]
    else:
        pmf = _poisson_pmf_matrix(j, np.array([scenario.arrivals.rate * extra_time * p]))[:, 0]
    tails = r ** (slots - j) if r > 0 else np.zeros(slots)
    return float(pmf @ (1.0 - tails))


# ---------------------------------------------------------------------------
# Wallet-style baseline: bid the expected block-time inclusion threshold
# ---------------------------------------------------------------------------


def expected_threshold_fee(scenario: Scenario) -> float:
    """Mean of the final inclusion threshold over a full block interval,
    with no mempool information - the number a wallet would recommend from
    historical block data."""
    m = scenario.capacity

    if isinstance(scenario.interval, ExponentialInterval):
        # competitor count over a whole interval is geometric, so the
        # count above u follows the thinned geometric ratio
        def survival(u):
            u = np.atleast_1d(np.asarray(u, dtype=float))
            p = fee_survival(scenario.fees, u)
            q = _memoryless_q(scenario)
            r = q * p / (1.0 - q * (1.0 - p))
            return r**m
    else:
        cdf = _threshold_cdf_fn(scenario, (), scenario.interval.duration)

        def survival(u):
            return 1.0 - cdf(u)

    if float(survival(0.0)[0]) <= 1e-15:
        return 0.0
    # find where the threshold tail becomes negligible
    hi = max(float(fee_quantile(scenario.fees, 0.5)), scenario.tick)
    while float(survival(hi)[0]) > 1e-13:
        hi *= 2.0
        if hi > 1e12:
            break
    knots = _distribution_edges(scenario)
    return _piecewise_gauss_legendre(survival, 0.0, hi, knots, total_nodes=4096)


def baseline_decision(scenario: Scenario, elapsed: float) -> StrategyDecision:
    """Bid the expected block-time threshold (capped at the valuation) and
    broadcast immediately."""
    _check_elapsed(scenario, elapsed)
    fee = min(expected_threshold_fee(scenario), scenario.valuation)
    win = float(_win_prob(scenario, elapsed, fee, scenario.capacity, observed=False)[0])
    util = (scenario.valuation - fee) * win
    return StrategyDecision(fee, elapsed, util, win)


# ---------------------------------------------------------------------------
# Utility against elapsed time
# ---------------------------------------------------------------------------


def _coupled_pools(scenario: Scenario, grid, draws: int, seed: int):
    """Per draw, one arrival stream shared across the grid, so pools at
    later elapsed times extend the earlier ones (common random numbers)."""
    rng = np.random.Generator(np.random.Philox(seed))
    t_max = max(grid)
    for _ in range(draws):
        if isinstance(scenario.arrivals, LinearArrivals):
            n_max = scenario.arrivals.count(t_max)
            times = (np.arange(1, n_max + 1)) / scenario.arrivals.rate if n_max else np.array([])
            counts = [scenario.arrivals.count(t) for t in grid]
        else:
            times = []
            t = 0.0
            while True:
                t += rng.exponential(1.0 / scenario.arrivals.rate) if scenario.arrivals.rate > 0 else np.inf
                if t > t_max:
                    break
                times.append(t)
            times = np.asarray(times)
            counts = [int(np.searchsorted(times, t, side="right")) for t in grid]
        fees = fee_sample(scenario.fees, rng, size=len(times))
        yield [tuple(fees[:c]) for c in counts]


def utility_vs_elapsed_curve(scenario: Scenario, strategy: str, grid, *,
                             draws: int = 200, seed: int = 0) -> list[CurvePoint]:
    """Evaluate a strategy at each elapsed time on the grid.

    ``nbr`` and ``baseline`` are exact.  ``ibr`` and ``fbr`` average over
    mempool realizations drawn from the arrival process conditioned on the
    elapsed time, with one arrival stream shared across the grid per draw.
    """
    grid = [float(t) for t in grid]
    for t in grid:
        _check_elapsed(scenario, t)
    strategy = strategy.lower()
    if strategy == "nbr":
        return [
            CurvePoint(t, d.expected_utility, d.fee, d.inclusion_probability)
            for t, d in ((t, nbr_optimize(scenario, t)) for t in grid)
        ]
    if strategy == "baseline":
        return [
            CurvePoint(t, d.expected_utility, d.fee, d.inclusion_probability)
            for t, d in ((t, baseline_decision(scenario, t)) for t in grid)
        ]
    if strategy not in ("ibr", "fbr"):
        raise DomainError(f"unknown strategy {strategy!r}")

    acc = np.zeros((len(grid), 3))
    for pools in _coupled_pools(scenario, grid, draws, seed):
        for i, (t, fees) in enumerate(zip(grid, pools)):
            pool = MempoolSnapshot(fees, t)
            if strategy == "ibr":
                d = ibr_optimize(scenario, pool)
            else:
                d = fbr_decide(scenario, pool)
            acc[i] += (d.expected_utility, d.fee, d.inclusion_probability)
    acc /= draws
    return [
        CurvePoint(t, float(u), float(f), float(w))
        for t, (u, f, w) in zip(grid, acc)
    ]
