"""Event-driven Monte Carlo simulation of both bidding schemes.

The simulator is the independent check on every analytic evaluator: each
trial draws a real block interval and arrival stream, settles inclusion by
the top-m fee rule with the later-arrival tie preference, and scores the
strategic bidder's utility as valuation minus fee when included.

Reproducibility: all randomness flows from a counter-based generator
(Philox) keyed by the caller's seed, trials are laid out in fixed-size
chunks, and aggregation order never depends on scheduling, so identical
(seed, configuration) pairs give bit-identical reports.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ctmc import PENDING, CtmcParams, CtmcState
from .errors import DomainError, NumericalError
from .model import (
    ExponentialInterval,
    FixedInterval,
    LinearArrivals,
    MempoolSnapshot,
    Scenario,
    count_above,
    fee_sample,
    floor_count,
)
from .strategies import (
    baseline_decision,
    ibr_optimize,
    nbr_optimize,
)

__all__ = [
    "SimulationReport",
    "PostponementPoint",
    "simulate_oblivious",
    "simulate_semi_strategic",
    "semi_strategic_block_states",
    "paired_postponement_experiment",
]

_CHUNK = 65_536
_THRESHOLD_CHUNK = 8_192
_SEMI_CHUNK = 50_000

OBLIVIOUS_POLICIES = ("nbr", "ibr", "fbr", "baseline", "fixed")


@dataclass(frozen=True)
class SimulationReport:
    """Monte Carlo estimate with its seed provenance.

    ``wall_time`` is informational and excluded from equality, so reports
    from identical (seed, config) runs compare equal.
    """

    trials: int
    mean_utility: float
    utility_stderr: float
    inclusion_rate: float
    seed: int
    wall_time: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class PostponementPoint:
    delay: int
    mean_utility: float
    utility_stderr: float
    mean_fee: float


class _Welford:
    """Streaming mean/variance over chunks (order-independent totals)."""

    def __init__(self):
        self.n = 0
        self.total = 0.0
        self.total_sq = 0.0
        self.wins = 0

    def add(self, utilities: np.ndarray, wins: int):
        self.n += utilities.size
        self.total += float(utilities.sum())
        self.total_sq += float((utilities * utilities).sum())
        self.wins += int(wins)

    def report(self, seed: int, t0: float) -> SimulationReport:
        mean = self.total / self.n
        var = max(self.total_sq - self.n * mean * mean, 0.0)
        var = var / (self.n - 1) if self.n > 1 else 0.0
        return SimulationReport(
            trials=self.n,
            mean_utility=mean,
            utility_stderr=float(np.sqrt(var / self.n)),
            inclusion_rate=self.wins / self.n,
            seed=seed,
            wall_time=time.perf_counter() - t0,
        )


def _parse_policy(policy) -> tuple[str, float | None]:
    if isinstance(policy, tuple):
        kind, fee = policy
        return str(kind).lower(), float(fee)
    name = str(policy).lower()
    if name.startswith("fixed:"):
        try:
            return "fixed", float(name.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"fixed policy needs a numeric fee, got {policy!r}") from None
    return name, None


def _segment_counts_above(flat: np.ndarray, counts: np.ndarray, fee) -> np.ndarray:
    """Per-segment count of entries strictly above ``fee``; ``fee`` is a
    scalar or one value per segment."""
    if flat.size == 0:
        return np.zeros(len(counts), dtype=np.int64)
    fee_arr = np.asarray(fee, dtype=float)
    if fee_arr.ndim > 0:
        fee_flat = np.repeat(fee_arr, counts)
    else:
        fee_flat = fee_arr
    mask = flat > fee_flat
    cs = np.concatenate([[0], np.cumsum(mask)])
    ends = np.cumsum(counts)
    starts = ends - counts
    return cs[ends] - cs[starts]


def _segment_mth_largest(flat: np.ndarray, counts: np.ndarray, m: int,
                         prefix: np.ndarray) -> np.ndarray:
    """Per-segment m-th largest of (prefix fees + segment fees); 0 when a
    segment holds fewer than m entries overall."""
    c = len(counts)
    lead = len(prefix)
    width = lead + (int(counts.max()) if c else 0)
    if width < m:
        return np.zeros(c)
    mat = np.full((c, width), -1.0)
    if lead:
        mat[:, :lead] = prefix
    if flat.size:
        ends = np.cumsum(counts)
        starts = ends - counts
        col = lead + np.arange(flat.size) - np.repeat(starts, counts)
        row = np.repeat(np.arange(c), counts)
        mat[row, col] = flat
    part = np.partition(mat, width - m, axis=1)[:, width - m]
    return np.maximum(part, 0.0)


def _future_window_counts(scenario: Scenario, elapsed: float, rng, size: int):
    """(residual durations or None, future arrival counts) for one chunk."""
    arr = scenario.arrivals
    if isinstance(scenario.interval, FixedInterval):
        window = scenario.interval.duration - elapsed
        if isinstance(arr, LinearArrivals):
            n = floor_count(arr.rate * scenario.interval.duration) - floor_count(arr.rate * elapsed)
            return None, np.full(size, n, dtype=np.int64)
        return None, rng.poisson(arr.rate * window, size).astype(np.int64)
    resid = rng.exponential(1.0 / scenario.interval.rate, size)
    if isinstance(arr, LinearArrivals):
        n0 = floor_count(arr.rate * elapsed)
        total = np.floor(arr.rate * (elapsed + resid) + 1e-9).astype(np.int64)
        return resid, total - n0
    return resid, rng.poisson(arr.rate * resid).astype(np.int64)


def _past_counts(scenario: Scenario, elapsed: float, rng, size: int) -> np.ndarray:
    arr = scenario.arrivals
    if isinstance(arr, LinearArrivals):
        return np.full(size, arr.count(elapsed), dtype=np.int64)
    return rng.poisson(arr.rate * elapsed, size).astype(np.int64)


def _audit_immediate(others: np.ndarray, sp_fee: float, m: int, fast_win: bool):
    """Sort-based re-derivation of the inclusion set: rank every bid by
    (fee, arrival index) with the strategic bid keyed as the latest arrival,
    take the top m, and check membership against the fast counter."""
    entries = [(float(f), i) for i, f in enumerate(others)]
    entries.append((float(sp_fee), len(others)))
    ranked = sorted(entries, key=lambda t: (t[0], t[1]), reverse=True)
    included = {idx for _, idx in ranked[:m]}
    sort_win = len(others) in included
    if sort_win != fast_win:
        raise NumericalError(
            f"inclusion audit failed: sort says {sort_win}, counter says {fast_win}"
        )


def simulate_oblivious(scenario: Scenario, policy, elapsed: float, trials: int,
                       seed: int, *, pool: MempoolSnapshot | None = None,
                       audit_fraction: float = 0.0) -> SimulationReport:
    """Simulate one strategy against mempool-oblivious bidders.

    ``policy`` is one of ``nbr``, ``ibr``, ``fbr``, ``baseline`` or
    ``fixed:<fee>`` (alternatively the tuple ``("fixed", fee)``).  When
    ``pool`` is given it pins the observed mempool at the elapsed time and
    only the future is random; otherwise the pre-broadcast arrivals are
    drawn from the arrival process each trial.

    ``audit_fraction`` re-derives the inclusion set of that fraction of
    trials by exhaustive sorting and raises on any mismatch.
    """
    t0 = time.perf_counter()
    if trials < 1:
        raise DomainError(f"need at least one trial, got {trials}")
    if elapsed < 0:
        raise DomainError(f"elapsed time must be nonnegative, got {elapsed}")
    if isinstance(scenario.interval, FixedInterval) and elapsed >= scenario.interval.duration:
        raise DomainError(
            f"block already due: elapsed {elapsed} >= duration "
            f"{scenario.interval.duration}"
        )
    kind, fixed_fee = _parse_policy(policy)
    if kind not in OBLIVIOUS_POLICIES:
        raise DomainError(f"unknown policy {policy!r}")
    if pool is not None and pool.elapsed != elapsed:
        pool = replace(pool, elapsed=elapsed)

    rng = np.random.Generator(np.random.Philox(seed))
    v = scenario.valuation
    m = scenario.capacity
    stride = int(round(1.0 / audit_fraction)) if audit_fraction > 0 else 0

    wait_policy = kind == "fbr" and isinstance(scenario.interval, FixedInterval)
    per_trial_decisions = kind in ("ibr", "fbr") and not wait_policy and pool is None

    static_fee = None
    if kind == "nbr":
        static_fee = nbr_optimize(scenario, elapsed).fee
    elif kind == "baseline":
        static_fee = baseline_decision(scenario, elapsed).fee
    elif kind == "fixed":
        if fixed_fee is None:
            raise DomainError("fixed policy needs a fee, e.g. 'fixed:1.5'")
        if fixed_fee < 0 or fixed_fee > v:
            raise DomainError(f"fixed fee must lie in [0, {v}], got {fixed_fee}")
        static_fee = fixed_fee
    elif kind in ("ibr", "fbr") and not wait_policy and pool is not None:
        static_fee = ibr_optimize(scenario, pool).fee

    acc = _Welford()
    pinned_fees = np.asarray(pool.fees, dtype=float) if pool is not None else None

    if per_trial_decisions:
        for i in range(trials):
            past = fee_sample(scenario.fees, rng,
                              size=int(_past_counts(scenario, elapsed, rng, 1)[0]))
            past = np.atleast_1d(past)
            _, fut_n = _future_window_counts(scenario, elapsed, rng, 1)
            future = np.atleast_1d(fee_sample(scenario.fees, rng, size=int(fut_n[0])))
            fee = ibr_optimize(scenario, MempoolSnapshot(tuple(past), elapsed)).fee
            above = int((past > fee).sum() + (future > fee).sum())
            win = above <= m - 1
            if stride and i % stride == stride - 1:
                _audit_immediate(np.concatenate([past, future]), fee, m, win)
            acc.add(np.array([(v - fee) * win]), int(win))
        return acc.report(seed, t0)

    chunk_size = _THRESHOLD_CHUNK if wait_policy else _CHUNK
    done = 0
    while done < trials:
        c = min(chunk_size, trials - done)
        if pinned_fees is None:
            past_n = _past_counts(scenario, elapsed, rng, c)
            past_flat = np.atleast_1d(fee_sample(scenario.fees, rng, size=int(past_n.sum())))
        else:
            past_n = np.full(c, len(pinned_fees), dtype=np.int64)
            past_flat = None
        _, fut_n = _future_window_counts(scenario, elapsed, rng, c)
        fut_flat = np.atleast_1d(fee_sample(scenario.fees, rng, size=int(fut_n.sum())))

        if wait_policy:
            if pinned_fees is None:
                counts = past_n + fut_n
                flat = _interleave_segments(past_flat, past_n, fut_flat, fut_n)
                thr = _segment_mth_largest(flat, counts, m, np.empty(0))
            else:
                thr = _segment_mth_largest(fut_flat, fut_n, m, pinned_fees)
            fees = thr + scenario.tick
            wins = fees <= v
            utils = np.where(wins, v - fees, 0.0)
            if stride:
                for i in range(stride - 1, c, stride):
                    seg = _segment_slice(fut_flat, fut_n, i)
                    base = pinned_fees if pinned_fees is not None else _segment_slice(past_flat, past_n, i)
                    combined = np.sort(np.concatenate([base, seg]))[::-1]
                    expect = combined[m - 1] if len(combined) >= m else 0.0
                    if abs(expect - thr[i]) > 1e-12:
                        raise NumericalError("threshold audit failed")
        else:
            fee = static_fee
            fut_above = _segment_counts_above(fut_flat, fut_n, fee)
            if pinned_fees is None:
                past_above = _segment_counts_above(past_flat, past_n, fee)
            else:
                past_above = count_above(pool, fee)
            wins = (past_above + fut_above) <= m - 1
            utils = np.where(wins, v - fee, 0.0)
            if stride:
                for i in range(stride - 1, c, stride):
                    seg = _segment_slice(fut_flat, fut_n, i)
                    base = pinned_fees if pinned_fees is not None else _segment_slice(past_flat, past_n, i)
                    _audit_immediate(np.concatenate([base, seg]), fee, m, bool(wins[i]))
        acc.add(utils, int(wins.sum()))
        done += c
    return acc.report(seed, t0)


def _segment_slice(flat: np.ndarray, counts: np.ndarray, i: int) -> np.ndarray:
    end = int(counts[: i + 1].sum())
    return flat[end - int(counts[i]): end]


def _interleave_segments(a_flat, a_counts, b_flat, b_counts) -> np.ndarray:
    """Concatenate two flat segment arrays segment-by-segment."""
    total = a_counts + b_counts
    out = np.empty(int(total.sum()))
    ends = np.cumsum(total)
    starts = ends - total
    a_ends = np.cumsum(a_counts)
    a_starts = a_ends - a_counts
    b_ends = np.cumsum(b_counts)
    b_starts = b_ends - b_counts
    for i in range(len(total)):
        out[starts[i]: starts[i] + a_counts[i]] = a_flat[a_starts[i]: a_ends[i]]
        out[starts[i] + a_counts[i]: ends[i]] = b_flat[b_starts[i]: b_ends[i]]
    return out


# ---------------------------------------------------------------------------
# Semi-strategic fee bumping
# ---------------------------------------------------------------------------


def _semi_core(params: CtmcParams, rounds: int, seed: int, collect: bool):
    n, m, v_hat = params.n, params.m, params.v_hat
    gamma, gamma_s, lam = params.gamma, params.gamma_s, params.block_rate
    total_rate = (n - 1) * gamma + gamma_s
    sp = n - 1
    rng = np.random.Generator(np.random.Philox(seed))
    acc = _Welford()
    n_codes = v_hat * m * (m + 1) + 1  # pending states plus the empty round
    state_counts = np.zeros(n_codes, dtype=np.int64) if collect else None

    done = 0
    while done < rounds:
        c = min(_SEMI_CHUNK, rounds - done)
        fee = np.zeros((c, n), dtype=np.int64)
        set_step = np.zeros((c, n), dtype=np.int64)
        steps = np.zeros(c, dtype=np.int64)
        since_sp = np.zeros(c, dtype=np.int64)
        deadline = rng.exponential(1.0 / lam, c)
        t = np.zeros(c)
        alive = np.arange(c)

        while alive.size:
            t[alive] += rng.exponential(1.0 / total_rate, alive.size)
            still = alive[t[alive] < deadline[alive]]
            if still.size < alive.size:
                alive = still
            if not alive.size:
                break
            pick = rng.random(alive.size)
            ordinary_pick = rng.integers(0, n - 1, alive.size)
            is_sp = pick < gamma_s / total_rate
            actor = np.where(is_sp, sp, ordinary_pick)

            f = fee[alive]
            keys = (f << 32) | set_step[alive]
            cut = np.partition(keys, n - m, axis=1)[:, n - m]
            rows = np.arange(alive.size)
            actor_key = keys[rows, actor]
            actor_fee = f[rows, actor]
            behind = (actor_fee == 0) | (actor_key < cut)
            target = (cut >> 32) + 1
            ok = behind & (target <= v_hat)

            upd = alive[ok]
            cols = actor[ok]
            steps[upd] += 1
            fee[upd, cols] = target[ok]
            set_step[upd, cols] = steps[upd]
            since_sp[alive[ok & is_sp]] = 0
            ordinary_rows = alive[ok & ~is_sp]
            since_sp[ordinary_rows] = np.minimum(since_sp[ordinary_rows] + 1, m)

        keys = (fee << 32) | set_step
        cut = np.partition(keys, n - m, axis=1)[:, n - m]
        sp_fee = fee[:, sp]
        wins = (sp_fee >= 1) & (keys[:, sp] >= cut)
        utils = np.where(wins, params.eta * (v_hat - sp_fee), 0.0)
        acc.add(utils, int(wins.sum()))

        if collect:
            top = fee.max(axis=1)
            nonempty = top >= 1
            k = (fee == top[:, None]).sum(axis=1)
            code = ((top - 1) * m + (k - 1)) * (m + 1) + since_sp
            code = np.where(nonempty, code, n_codes - 1)
            state_counts += np.bincount(code, minlength=n_codes)
        done += c
    return acc, state_counts


def simulate_semi_strategic(params: CtmcParams, trials: int, seed: int) -> SimulationReport:
    """Simulate fee-bumping rounds at the user level.

    Each round starts from an empty mempool, runs every user's observation
    clock against an exponential block timer, and scores the strategic
    bidder by the top-m rule at block time.  Rounds are independent, which
    matches the regenerative structure of the chain.
    """
    t0 = time.perf_counter()
    if trials < 1:
        raise DomainError(f"need at least one round, got {trials}")
    acc, _ = _semi_core(params, trials, seed, collect=False)
    return acc.report(seed, t0)


def semi_strategic_block_states(params: CtmcParams, trials: int, seed: int):
    """Like :func:`simulate_semi_strategic` but also tallies the mempool
    state each block lands in.

    Returns ``(report, counts)`` where counts maps pending chain states to
    the number of rounds whose block fired there, plus ``"empty"`` for
    rounds with no broadcast.  Block landings sample the stationary law, so
    these frequencies estimate the pending-state probabilities directly.
    """
    t0 = time.perf_counter()
    if trials < 1:
        raise DomainError(f"need at least one round, got {trials}")
    acc, raw = _semi_core(params, trials, seed, collect=True)
    report = acc.report(seed, t0)
    counts: dict = {"empty": int(raw[-1])}
    m, v_hat = params.m, params.v_hat
    for b in range(1, v_hat + 1):
        for k in range(1, m + 1):
            for i in range(m + 1):
                code = ((b - 1) * m + (k - 1)) * (m + 1) + i
                if raw[code]:
                    counts[CtmcState(PENDING, k, b, i)] = int(raw[code])
    return report, counts


# ---------------------------------------------------------------------------
# Broadcast postponement under the memoryless interval
# ---------------------------------------------------------------------------


def paired_postponement_experiment(scenario: Scenario, pool: MempoolSnapshot,
                                   delays, trials: int, seed: int) -> list[PostponementPoint]:
    """Compare the joint strategy's utility across broadcast postponements.

    A postponement of ``d`` means the bidder waits until ``d`` further
    arrivals have landed in the mempool (observing them) before deciding;
    the block may fire first, in which case the trial scores zero.  All
    delays share each trial's block interval and arrival stream (common
    random numbers), so differences between grid points are paired.
    """
    if not isinstance(scenario.interval, ExponentialInterval):
        raise DomainError("postponement analysis applies to the exponential interval")
    if trials < 1:
        raise DomainError(f"need at least one trial, got {trials}")
    delays = [int(d) for d in delays]
    if any(d < 0 for d in delays):
        raise DomainError("delays are arrival counts and must be nonnegative")

    rng = np.random.Generator(np.random.Philox(seed))
    beta = scenario.arrivals.rate
    lam = scenario.interval.rate
    m = scenario.capacity
    v = scenario.valuation
    elapsed = pool.elapsed
    base_fees = np.asarray(pool.fees, dtype=float)

    base_decision = ibr_optimize(scenario, pool)
    linear = isinstance(scenario.arrivals, LinearArrivals)
    if linear:
        n0 = scenario.arrivals.count(elapsed)

    sums = {d: 0.0 for d in delays}
    sqs = {d: 0.0 for d in delays}
    fee_sums = {d: 0.0 for d in delays}
    fee_counts = {d: 0 for d in delays}

    for _ in range(trials):
        resid = rng.exponential(1.0 / lam)
        if linear:
            k_total = floor_count(beta * (elapsed + resid)) - n0
            times = (np.arange(1, k_total + 1) + n0) / beta - elapsed if k_total else np.empty(0)
        else:
            k_total = int(rng.poisson(beta * resid))
            times = np.sort(rng.random(k_total)) * resid
        fees = np.atleast_1d(fee_sample(scenario.fees, rng, size=k_total))

        for d in delays:
            if d == 0:
                fee = base_decision.fee
            elif k_total < d:
                # block fired before the d-th observation: no broadcast,
                # the trial contributes zero utility
                continue
            else:
                observed = MempoolSnapshot(tuple(base_fees) + tuple(fees[:d]),
                                           elapsed + float(times[d - 1]))
                fee = ibr_optimize(scenario, observed).fee
            above = int((base_fees > fee).sum() + (fees > fee).sum())
            util = (v - fee) if above <= m - 1 else 0.0
            sums[d] += util
            sqs[d] += util * util
            fee_sums[d] += fee
            fee_counts[d] += 1

    points = []
    for d in delays:
        mean = sums[d] / trials
        var = max(sqs[d] - trials * mean * mean, 0.0)
        var = var / (trials - 1) if trials > 1 else 0.0
        mean_fee = fee_sums[d] / fee_counts[d] if fee_counts[d] else float("nan")
        points.append(PostponementPoint(d, mean, float(np.sqrt(var / trials)), mean_fee))
    return points
