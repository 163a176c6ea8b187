"""Shared helpers: seeded random scenario and mempool generators."""

from pathlib import Path

import numpy as np

from feesim.model import (
    EmpiricalFees,
    ExponentialInterval,
    FixedInterval,
    LinearArrivals,
    MempoolSnapshot,
    ParetoFees,
    PoissonArrivals,
    Scenario,
    UniformFees,
    fee_quantile,
    fee_sample,
)

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def random_fee_distribution(rng: np.random.Generator):
    kind = rng.integers(0, 3)
    if kind == 0:
        lo = float(rng.uniform(0.0, 0.5))
        return UniformFees(lo, lo + float(rng.uniform(0.5, 2.5)))
    if kind == 1:
        minimum = float(rng.uniform(0.2, 1.0))
        return ParetoFees(minimum, minimum * float(rng.uniform(1.3, 6.0)))
    samples = rng.uniform(0.0, 3.0, size=int(rng.integers(5, 20)))
    return EmpiricalFees(tuple(np.round(samples, 6)))


def _valuation(rng, fees) -> float:
    anchor = float(fee_quantile(fees, 0.8))
    return max(anchor * float(rng.uniform(0.5, 1.6)), 0.05)


def random_pow_scenario(rng: np.random.Generator, *, max_rate_ratio: float = 19.0,
                        max_capacity: int = 10) -> Scenario:
    lam = float(rng.uniform(0.05, 1.0))
    beta = lam * float(rng.uniform(1.0, max_rate_ratio))
    arrivals = LinearArrivals(beta) if rng.random() < 0.5 else PoissonArrivals(beta)
    fees = random_fee_distribution(rng)
    m = int(rng.integers(1, max_capacity + 1))
    v = _valuation(rng, fees)
    return Scenario(ExponentialInterval(lam), arrivals, fees, m, v, v * 1e-9)


def random_pos_scenario(rng: np.random.Generator, *, max_capacity: int = 12) -> Scenario:
    duration = float(rng.uniform(2.0, 20.0))
    beta = float(rng.uniform(0.5, 1500.0 / duration))
    arrivals = LinearArrivals(beta) if rng.random() < 0.5 else PoissonArrivals(beta)
    fees = random_fee_distribution(rng)
    m = int(rng.integers(1, max_capacity + 1))
    v = _valuation(rng, fees)
    return Scenario(FixedInterval(duration), arrivals, fees, m, v, v * 1e-9)


def random_pool(rng: np.random.Generator, scenario: Scenario,
                elapsed: float | None = None) -> MempoolSnapshot:
    """Mempool consistent with the arrival process at a random elapsed time."""
    if elapsed is None:
        if isinstance(scenario.interval, FixedInterval):
            elapsed = float(rng.uniform(0.0, 0.85 * scenario.interval.duration))
        else:
            elapsed = float(rng.uniform(0.0, 2.0 / scenario.interval.rate))
    if isinstance(scenario.arrivals, LinearArrivals):
        n = scenario.arrivals.count(elapsed)
    else:
        n = int(rng.poisson(scenario.arrivals.rate * elapsed))
    fees = np.atleast_1d(fee_sample(scenario.fees, rng, size=n))
    return MempoolSnapshot(tuple(float(f) for f in fees), elapsed)
