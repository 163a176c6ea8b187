"""Fee-market environment model.

Block-interval laws, transaction arrival processes, fee distributions and
mempool snapshots, plus the primitive probability computations every
strategy evaluator, the fee-bumping chain and the Monte Carlo simulator
are built on.

Conventions used throughout the package:

* fees are nonnegative reals in arbitrary currency units,
* a block holds at most ``capacity`` unit-size transactions and the miner
  picks the top-``capacity`` fees,
* exact fee ties are broken in favour of the later arrival, so a pending
  fee equal to the strategic bidder's fee does *not* outbid it (the
  alternative convention is available through ``count_ties=True``).

Everything here is a pure function of its inputs except ``fee_sample``,
which mutates only the caller-supplied generator, so concurrent use is
safe as long as generators are not shared across tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import DomainError, InvalidStateError

__all__ = [
    "ExponentialInterval",
    "FixedInterval",
    "BlockInterval",
    "LinearArrivals",
    "PoissonArrivals",
    "ArrivalProcess",
    "ParetoFees",
    "UniformFees",
    "EmpiricalFees",
    "FeeDistribution",
    "Scenario",
    "MempoolSnapshot",
    "interval_cdf",
    "residual_interval_cdf",
    "arrival_count_pmf",
    "fee_cdf",
    "fee_survival",
    "fee_quantile",
    "fee_sample",
    "count_above",
    "threshold_fee",
]

# Guards floor() against floating noise when rate*time lands on an integer.
_COUNT_EPS = 1e-9


def floor_count(x: float) -> int:
    """Deterministic transaction count floor(x), robust at integer edges."""
    return int(math.floor(x + _COUNT_EPS))


# ---------------------------------------------------------------------------
# Block interval laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialInterval:
    """Memoryless block interval, the proof-of-work regime.

    ``rate`` is the block production rate, so the mean interval is
    ``1 / rate``.
    """

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"block rate must be positive, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class FixedInterval:
    """Deterministic block interval, the proof-of-stake regime."""

    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise DomainError(
                f"block duration must be positive, got {self.duration}"
            )

    @property
    def mean(self) -> float:
        return self.duration


BlockInterval = Union[ExponentialInterval, FixedInterval]


def interval_cdf(model: BlockInterval, t: float) -> float:
    """P(block interval <= t).

    The fixed interval is a step: 0 strictly before the deadline, 1 at and
    after it.
    """
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if isinstance(model, ExponentialInterval):
        return -math.expm1(-model.rate * t)
    return 1.0 if t >= model.duration else 0.0


def residual_interval_cdf(model: BlockInterval, elapsed: float, t: float) -> float:
    """P(block interval <= t | interval > elapsed).

    For the exponential interval this reduces to ``interval_cdf`` of the
    remaining time (memorylessness); for the fixed interval the deadline
    is unmoved, and asking after the deadline is an invalid state.
    """
    if elapsed < 0:
        raise DomainError(f"elapsed time must be nonnegative, got {elapsed}")
    if t < elapsed:
        raise DomainError(f"query time {t} precedes elapsed time {elapsed}")
    if isinstance(model, ExponentialInterval):
        return interval_cdf(model, t - elapsed)
    if elapsed >= model.duration:
        raise InvalidStateError(
            f"block already due: elapsed {elapsed} >= duration {model.duration}"
        )
    return 1.0 if t >= model.duration else 0.0


# ---------------------------------------------------------------------------
# Arrival processes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearArrivals:
    """Deterministic arrivals: exactly floor(rate * t) transactions by time t.

    Realized arrival epochs sit on the grid ``j / rate``.
    """

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise DomainError(f"arrival rate must be nonnegative, got {self.rate}")

    def count(self, window: float) -> int:
        if window < 0:
            raise DomainError(f"window must be nonnegative, got {window}")
        return floor_count(self.rate * window)


@dataclass(frozen=True)
class PoissonArrivals:
    """Homogeneous Poisson arrivals at the given rate."""

    rate: float

    def __post_init__(self):
        if self.rate < 0:
            raise DomainError(f"arrival rate must be nonnegative, got {self.rate}")

    def mean_count(self, window: float) -> float:
        if window < 0:
            raise DomainError(f"window must be nonnegative, got {window}")
        return self.rate * window


ArrivalProcess = Union[LinearArrivals, PoissonArrivals]


def arrival_count_pmf(proc: ArrivalProcess, window: float, n: int) -> float:
    """P(exactly n arrivals in a window of the given length)."""
    if window < 0:
        raise DomainError(f"window must be nonnegative, got {window}")
    if n < 0:
        raise DomainError(f"count must be nonnegative, got {n}")
    if isinstance(proc, LinearArrivals):
        return 1.0 if n == proc.count(window) else 0.0
    mu = proc.rate * window
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


# ---------------------------------------------------------------------------
# Fee distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParetoFees:
    """Pareto fees pinned by their support minimum and mean.

    The shape parameter is implied by the Pareto mean identity
    ``mean = shape * minimum / (shape - 1)``, which gives
    ``shape = mean / (mean - minimum) > 1``.
    """

    minimum: float
    mean: float

    def __post_init__(self):
        if not 0 < self.minimum < self.mean:
            raise DomainError(
                f"need 0 < minimum < mean, got minimum={self.minimum}, mean={self.mean}"
            )

    @property
    def shape(self) -> float:
        return self.mean / (self.mean - self.minimum)


@dataclass(frozen=True)
class UniformFees:
    """Uniform fees on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo < self.hi:
            raise DomainError(f"need 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")


@dataclass(frozen=True)
class EmpiricalFees:
    """Discrete fee law given by a sample; the CDF is the right-continuous
    step function of the sorted sample and the quantile is its generalized
    inverse."""

    samples: tuple

    def __post_init__(self):
        samples = tuple(sorted(float(s) for s in self.samples))
        if not samples:
            raise DomainError("empirical fee distribution needs at least one sample")
        if samples[0] < 0:
            raise DomainError(f"fees must be nonnegative, got {samples[0]}")
        object.__setattr__(self, "samples", samples)


FeeDistribution = Union[ParetoFees, UniformFees, EmpiricalFees]


def _as_array(b):
    arr = np.asarray(b, dtype=float)
    return arr, arr.ndim == 0


def _maybe_scalar(arr, scalar: bool):
    return float(arr) if scalar else arr


def fee_cdf(dist: FeeDistribution, b) -> float:
    """F(b) = P(fee <= b).  Accepts a scalar or an array of fee levels."""
    arr, scalar = _as_array(b)
    if isinstance(dist, ParetoFees):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(arr < dist.minimum, 0.0, 1.0 - (dist.minimum / arr) ** dist.shape)
    elif isinstance(dist, UniformFees):
        out = np.clip((arr - dist.lo) / (dist.hi - dist.lo), 0.0, 1.0)
    else:
        samples = np.asarray(dist.samples)
        out = np.searchsorted(samples, arr, side="right") / len(samples)
    return _maybe_scalar(out, scalar)


def fee_survival(dist: FeeDistribution, b) -> float:
    """1 - F(b), computed directly where that is more accurate (Pareto tail)."""
    arr, scalar = _as_array(b)
    if isinstance(dist, ParetoFees):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(arr < dist.minimum, 1.0, (dist.minimum / arr) ** dist.shape)
    else:
        out = 1.0 - fee_cdf(dist, arr)
    return _maybe_scalar(out, scalar)


def fee_quantile(dist: FeeDistribution, p) -> float:
    """Generalized inverse of the CDF.  p must lie in [0, 1]."""
    arr, scalar = _as_array(p)
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("quantile level must lie in [0, 1]")
    if isinstance(dist, ParetoFees):
        with np.errstate(divide="ignore"):
            out = dist.minimum * (1.0 - arr) ** (-1.0 / dist.shape)
    elif isinstance(dist, UniformFees):
        out = dist.lo + arr * (dist.hi - dist.lo)
    else:
        samples = np.asarray(dist.samples)
        n = len(samples)
        idx = np.clip(np.ceil(arr * n).astype(int) - 1, 0, n - 1)
        out = samples[idx]
    return _maybe_scalar(out, scalar)


def fee_sample(dist: FeeDistribution, rng: np.random.Generator, size=None):
    """Draw fees by inverse transform; mutates only the supplied generator."""
    return fee_quantile(dist, rng.random(size))


# ---------------------------------------------------------------------------
# Scenario and mempool state
# ---------------------------------------------------------------------------

# A currency tick larger than this fraction of the valuation would distort
# the wait-to-deadline policy, which pays threshold-plus-tick.
_MAX_TICK_FRACTION = 1e-6


@dataclass(frozen=True)
class Scenario:
    """Full environment description for one experiment.

    ``capacity`` is the number of unit-size transactions per block,
    ``valuation`` the strategic bidder's value for inclusion in the next
    block, and ``tick`` the smallest currency unit.
    """

    interval: BlockInterval
    arrivals: ArrivalProcess
    fees: FeeDistribution
    capacity: int
    valuation: float
    tick: float

    def __post_init__(self):
        if not isinstance(self.capacity, (int, np.integer)) or self.capacity < 1:
            raise DomainError(f"capacity must be an integer >= 1, got {self.capacity}")
        if not self.valuation > 0:
            raise DomainError(f"valuation must be positive, got {self.valuation}")
        if not self.tick > 0:
            raise DomainError(f"tick must be positive, got {self.tick}")
        if self.tick > self.valuation * _MAX_TICK_FRACTION:
            raise DomainError(
                f"tick {self.tick} is not small next to the valuation "
                f"{self.valuation}; need tick <= valuation * {_MAX_TICK_FRACTION:g}"
            )


@dataclass(frozen=True)
class MempoolSnapshot:
    """Observed pending fees plus the time elapsed since the last block."""

    fees: tuple = ()
    elapsed: float = 0.0

    def __post_init__(self):
        fees = tuple(float(f) for f in self.fees)
        if any(f < 0 for f in fees):
            raise DomainError("pending fees must be nonnegative")
        if self.elapsed < 0:
            raise DomainError(f"elapsed time must be nonnegative, got {self.elapsed}")
        object.__setattr__(self, "fees", fees)

    def __len__(self) -> int:
        return len(self.fees)


def _pool_fees(pool) -> Sequence[float]:
    if isinstance(pool, MempoolSnapshot):
        return pool.fees
    if isinstance(pool, Iterable):
        return tuple(pool)
    raise DomainError(f"expected a mempool snapshot or fee iterable, got {pool!r}")


def count_above(pool, b: float, *, count_ties: bool = False) -> int:
    """Number of pending fees strictly above ``b``.

    With the default tie rule an equal pending fee loses to the later
    arrival and therefore does not count; ``count_ties=True`` switches to
    the pessimistic convention in which it does.
    """
    fees = _pool_fees(pool)
    if count_ties:
        return sum(1 for f in fees if f >= b)
    return sum(1 for f in fees if f > b)


def threshold_fee(pool, m: int) -> float:
    """The m-th largest pending fee: the cheapest fee that wins a slot.

    Returns 0 when fewer than ``m`` transactions are pending, since the
    block then has room to spare.
    """
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise DomainError(f"capacity must be an integer >= 1, got {m}")
    fees = _pool_fees(pool)
    if len(fees) < m:
        return 0.0
    return sorted(fees, reverse=True)[m - 1]
