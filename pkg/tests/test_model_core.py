"""Primitive model operations: interval laws, arrivals, fees, pools."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feesim.errors import DomainError, InvalidStateError
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
    arrival_count_pmf,
    count_above,
    fee_cdf,
    fee_quantile,
    fee_sample,
    fee_survival,
    interval_cdf,
    residual_interval_cdf,
    threshold_fee,
)


class TestIntervalLaws:
    def test_exponential_cdf(self):
        assert interval_cdf(ExponentialInterval(0.1), 10.0) == pytest.approx(
            1.0 - math.exp(-1.0), abs=1e-12
        )

    def test_exponential_cdf_at_origin(self):
        assert interval_cdf(ExponentialInterval(0.1), 0.0) == 0.0

    def test_fixed_cdf_is_a_step(self):
        model = FixedInterval(12.0)
        assert interval_cdf(model, 11.9) == 0.0
        assert interval_cdf(model, 12.0) == 1.0
        assert interval_cdf(model, 15.0) == 1.0

    def test_negative_time_rejected(self):
        with pytest.raises(DomainError):
            interval_cdf(ExponentialInterval(1.0), -0.5)

    def test_residual_memoryless(self):
        model = ExponentialInterval(0.1)
        assert residual_interval_cdf(model, 5.0, 15.0) == pytest.approx(
            1.0 - math.exp(-1.0), abs=1e-12
        )

    def test_residual_zero_window(self):
        assert residual_interval_cdf(ExponentialInterval(0.1), 7.0, 7.0) == 0.0

    def test_residual_fixed_deadline(self):
        assert residual_interval_cdf(FixedInterval(12.0), 3.0, 12.0) == 1.0
        assert residual_interval_cdf(FixedInterval(12.0), 3.0, 11.0) == 0.0

    def test_residual_after_deadline_is_invalid(self):
        with pytest.raises(InvalidStateError):
            residual_interval_cdf(FixedInterval(12.0), 12.0, 13.0)

    def test_residual_query_before_elapsed(self):
        with pytest.raises(DomainError):
            residual_interval_cdf(ExponentialInterval(1.0), 5.0, 4.0)

    @given(
        st.floats(0.01, 10.0),
        st.floats(0.0, 50.0),
        st.floats(0.0, 50.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_memorylessness_property(self, rate, elapsed, delta):
        model = ExponentialInterval(rate)
        lhs = residual_interval_cdf(model, elapsed, elapsed + delta)
        rhs = interval_cdf(model, delta)
        assert lhs == pytest.approx(rhs, abs=1e-12)

    @given(st.floats(0.01, 5.0), st.floats(0.0, 20.0), st.floats(0.0, 20.0))
    @settings(max_examples=100, deadline=None)
    def test_cdf_nondecreasing(self, rate, t1, t2):
        lo, hi = sorted((t1, t2))
        model = ExponentialInterval(rate)
        assert interval_cdf(model, lo) <= interval_cdf(model, hi) + 1e-15


class TestArrivalCounts:
    def test_poisson_empty_window(self):
        assert arrival_count_pmf(PoissonArrivals(40.0), 0.0, 0) == 1.0

    def test_linear_count_is_deterministic(self):
        assert arrival_count_pmf(LinearArrivals(40.0), 0.5, 20) == 1.0
        assert arrival_count_pmf(LinearArrivals(40.0), 0.5, 19) == 0.0

    def test_poisson_pointwise(self):
        assert arrival_count_pmf(PoissonArrivals(2.0), 1.0, 2) == pytest.approx(
            2.0 * math.exp(-2.0), rel=1e-12
        )

    @given(st.floats(0.1, 30.0), st.floats(0.0, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_poisson_pmf_sums_to_one(self, rate, window):
        proc = PoissonArrivals(rate)
        mu = rate * window
        cutoff = int(mu + 12 * math.sqrt(mu) + 40)
        total = sum(arrival_count_pmf(proc, window, n) for n in range(cutoff))
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_domain_checks(self):
        with pytest.raises(DomainError):
            arrival_count_pmf(PoissonArrivals(1.0), -1.0, 0)
        with pytest.raises(DomainError):
            arrival_count_pmf(LinearArrivals(1.0), 1.0, -1)


class TestFeeDistributions:
    def test_pareto_support_minimum(self):
        assert fee_cdf(ParetoFees(1.0, 5.9512), 1.0) == 0.0

    def test_pareto_shape_from_moments(self):
        dist = ParetoFees(1.0, 5.9512)
        assert dist.shape == pytest.approx(5.9512 / 4.9512, rel=1e-12)
        # mean identity: shape * min / (shape - 1) recovers the mean
        assert dist.shape * dist.minimum / (dist.shape - 1.0) == pytest.approx(
            dist.mean, rel=1e-12
        )

    def test_pareto_requires_mean_above_minimum(self):
        with pytest.raises(DomainError):
            ParetoFees(2.0, 2.0)

    def test_uniform_cdf(self):
        assert fee_cdf(UniformFees(0.0, 1.0), 0.25) == 0.25

    def test_pareto_sample_mean(self):
        # moment check against the constructor inputs; the tail index is
        # below 2 so the spread is taken from the sample itself
        dist = ParetoFees(1.0, 5.9512)
        rng = np.random.Generator(np.random.Philox(20240331))
        draws = fee_sample(dist, rng, size=1_000_000)
        stderr = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - 5.9512) <= 3.0 * stderr

    @given(st.floats(0.0, 0.999999))
    @settings(max_examples=200, deadline=None)
    def test_quantile_roundtrip_pareto(self, p):
        dist = ParetoFees(0.7, 2.9)
        assert fee_cdf(dist, fee_quantile(dist, p)) == pytest.approx(p, abs=1e-9)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=200, deadline=None)
    def test_quantile_roundtrip_uniform(self, p):
        dist = UniformFees(0.25, 1.75)
        assert fee_cdf(dist, fee_quantile(dist, p)) == pytest.approx(p, abs=1e-9)

    def test_quantile_domain(self):
        with pytest.raises(DomainError):
            fee_quantile(UniformFees(0.0, 1.0), 1.5)
        with pytest.raises(DomainError):
            fee_quantile(ParetoFees(1.0, 2.0), -0.1)

    def test_empirical_step_cdf(self):
        dist = EmpiricalFees((1.0, 2.0, 2.0, 5.0))
        assert fee_cdf(dist, 0.5) == 0.0
        assert fee_cdf(dist, 1.0) == 0.25   # right-continuous at the atoms
        assert fee_cdf(dist, 2.0) == 0.75
        assert fee_cdf(dist, 4.9) == 0.75
        assert fee_cdf(dist, 5.0) == 1.0

    def test_empirical_generalized_inverse(self):
        dist = EmpiricalFees((1.0, 2.0, 2.0, 5.0))
        assert fee_quantile(dist, 0.0) == 1.0
        assert fee_quantile(dist, 0.25) == 1.0
        assert fee_quantile(dist, 0.26) == 2.0
        assert fee_quantile(dist, 1.0) == 5.0

    def test_survival_complements_cdf(self):
        dist = ParetoFees(1.0, 3.0)
        for b in (0.5, 1.0, 2.0, 10.0, 1e4):
            assert fee_survival(dist, b) == pytest.approx(1.0 - fee_cdf(dist, b), abs=1e-12)

    def test_sampling_respects_support(self):
        rng = np.random.Generator(np.random.Philox(7))
        draws = fee_sample(ParetoFees(1.5, 4.0), rng, size=10_000)
        assert draws.min() >= 1.5


class TestScenarioValidation:
    def _base(self, **kw):
        args = dict(
            interval=FixedInterval(10.0),
            arrivals=LinearArrivals(40.0),
            fees=UniformFees(0.0, 1.0),
            capacity=5,
            valuation=0.9,
            tick=1e-9,
        )
        args.update(kw)
        return Scenario(**args)

    def test_valid(self):
        self._base()

    def test_capacity_positive_integer(self):
        with pytest.raises(DomainError):
            self._base(capacity=0)

    def test_tick_must_be_small(self):
        with pytest.raises(DomainError):
            self._base(tick=0.01)

    def test_tick_positive(self):
        with pytest.raises(DomainError):
            self._base(tick=0.0)

    def test_negative_pending_fee_rejected(self):
        with pytest.raises(DomainError):
            MempoolSnapshot((-1.0,), 0.0)


class TestPoolOperations:
    def test_count_above(self):
        assert count_above(MempoolSnapshot((3.0, 1.0, 4.0)), 2.0) == 2

    def test_count_above_empty(self):
        assert count_above(MempoolSnapshot(()), 10.0) == 0

    def test_count_above_ties_favor_later_arrival(self):
        pool = MempoolSnapshot((2.0, 2.0, 5.0))
        assert count_above(pool, 2.0) == 1
        assert count_above(pool, 2.0, count_ties=True) == 3

    def test_threshold_fee(self):
        assert threshold_fee(MempoolSnapshot((5.0, 3.0, 8.0)), 2) == 5.0

    def test_threshold_fee_underfull_pool(self):
        assert threshold_fee(MempoolSnapshot((5.0,)), 3) == 0.0

    def test_threshold_fee_duplicates(self):
        assert threshold_fee(MempoolSnapshot((7.0, 7.0, 2.0)), 2) == 7.0

    @given(
        st.lists(st.floats(0.0, 100.0), min_size=0, max_size=1000),
        st.integers(1, 12),
    )
    @settings(max_examples=200, deadline=None)
    def test_threshold_against_brute_force(self, fees, m):
        pool = MempoolSnapshot(tuple(fees))
        thr = threshold_fee(pool, m)
        ranked = sorted(fees, reverse=True)
        expected = ranked[m - 1] if len(fees) >= m else 0.0
        assert thr == expected
        if m > 1:
            assert thr <= threshold_fee(pool, m - 1)
        assert count_above(pool, thr) <= m - 1
        if len(fees) >= m and thr > 0:
            just_below = thr - 1e-9 * max(thr, 1.0)
            assert count_above(pool, just_below) >= m
