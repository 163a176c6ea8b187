"""Continuous-time Markov chain for fee bumping among semi-strategic users.

One strategic bidder competes with ``n - 1`` ordinary users for ``m`` block
slots under a memoryless block interval.  Every user whose transaction is
not currently among the top ``m`` (fee first, later arrival wins ties)
bumps to one level above the inclusion threshold when his observation
clock fires: ordinary clocks ring at rate ``gamma`` each, the strategic
bidder's at rate ``gamma_s``.  Fee levels are integers ``1..v_hat`` in
units of the bump increment; nobody bids above his valuation.

The chain tracks (k, b, i): ``b`` the current top fee level, ``k`` how many
transactions sit at that level, and ``i`` how many fees arrived since the
strategic bidder last set his own (saturating at ``m``).  A round ends when
a block fires (rate ``block_rate``); the post-block states, plus the
empty-mempool state, restart the next round.

The strategic bidder's transaction is among the winners iff ``i <= k - 1``
(his fee is at the top level, paying ``b``) or ``k <= i <= m - 1`` (his fee
sits one level below the top but survives the tie rule, paying ``b - 1``).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, NumericalError

__all__ = [
    "CtmcParams",
    "CtmcState",
    "BalanceSystem",
    "StationaryDistribution",
    "SweepPoint",
    "state_count",
    "enumerate_states",
    "build_balance_system",
    "solve_stationary",
    "expected_utility_per_round",
    "sp_win_probability",
    "sweep",
]

# Dense solves beyond this state count are not worth their memory; callers
# should shrink m or v_hat instead.
_MAX_STATES = 50_000

ZERO = "zero"
PENDING = "pending"
GENERATED = "generated"

SWEEPABLE = ("gamma_s", "gamma", "v_hat", "m", "n")


@dataclass(frozen=True)
class CtmcParams:
    """Parameters of one fee-bumping round.

    ``v_hat`` is the valuation measured in bump increments (``eta``), and
    must leave room for at least one bid.
    """

    n: int
    m: int
    v_hat: int
    gamma: float
    gamma_s: float
    block_rate: float
    eta: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.m, (int, np.integer)) and self.m >= 1):
            raise DomainError(f"capacity must be an integer >= 1, got {self.m}")
        if not (isinstance(self.n, (int, np.integer)) and self.n > self.m):
            raise DomainError(
                f"need more pending transactions than slots (n > m), "
                f"got n={self.n}, m={self.m}"
            )
        if not (isinstance(self.v_hat, (int, np.integer)) and self.v_hat >= 1):
            raise DomainError(f"normalized valuation must be >= 1, got {self.v_hat}")
        for name in ("gamma", "gamma_s", "block_rate", "eta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class CtmcState:
    """One chain state.

    ``kind`` is ``zero`` (empty mempool), ``pending`` (round in progress)
    or ``generated`` (block just captured the mempool).  ``k``/``b``/``i``
    are meaningful for the latter two kinds only.
    """

    kind: str
    k: int = 0
    b: int = 0
    i: int = 0

    def label(self) -> str:
        if self.kind == ZERO:
            return "0"
        tag = "Q" if self.kind == PENDING else "S"
        return f"{tag}({self.k},{self.b},{self.i})"


def state_count(params: CtmcParams) -> int:
    """1 + 2 * m * v_hat * (m + 1): the zero state plus a pending and a
    generated copy of every (k, b, i) combination."""
    return 1 + 2 * params.m * params.v_hat * (params.m + 1)


def enumerate_states(params: CtmcParams) -> list[CtmcState]:
    """Deterministic state order: zero first, pending states lexicographic
    in (b, k, i), then the generated states in the same order."""
    states = [CtmcState(ZERO)]
    for kind in (PENDING, GENERATED):
        for b in range(1, params.v_hat + 1):
            for k in range(1, params.m + 1):
                for i in range(params.m + 1):
                    states.append(CtmcState(kind, k, b, i))
    return states


def _bump_target(params: CtmcParams, k: int, b: int) -> tuple[int, int] | None:
    """Where a successful bump moves the top layer; None when the bid would
    exceed the valuation."""
    if k < params.m:
        return k + 1, b
    if b < params.v_hat:
        return 1, b + 1
    return None


def _transitions(params: CtmcParams, state: CtmcState):
    """Outgoing (target, rate) pairs of one state."""
    n, m, v_hat = params.n, params.m, params.v_hat
    gamma, gamma_s, lam = params.gamma, params.gamma_s, params.block_rate

    if state.kind in (ZERO, GENERATED):
        # empty mempool: the first clock to ring opens the round
        out = [
            (CtmcState(PENDING, 1, 1, 0), gamma_s),
            (CtmcState(PENDING, 1, 1, 1), (n - 1) * gamma),
        ]
        if state.kind == GENERATED:
            out.append((CtmcState(ZERO), lam))  # empty block
        return out

    k, b, i = state.k, state.b, state.i
    out = [(CtmcState(GENERATED, k, b, i), lam)]
    target = _bump_target(params, k, b)
    if target is None:
        return out
    tk, tb = target

    # The strategic bidder is behind the inclusion cutoff iff at b = 1 at
    # least k fees arrived since his last set (he has not broadcast), or at
    # b >= 2 the arrivals since his set saturated at m.
    sp_behind = i >= k if b == 1 else i >= m
    if sp_behind:
        out.append((CtmcState(PENDING, tk, tb, 0), gamma_s))

    # Ordinary users behind the cutoff: at b = 1 these are the n - k yet to
    # broadcast; at b >= 2 exactly n - m transactions sit below the cutoff.
    # One of them is the strategic bidder's whenever he is behind.
    behind = (n - k) if b == 1 else (n - m)
    ordinary = behind - 1 if sp_behind else behind
    if ordinary > 0:
        out.append((CtmcState(PENDING, tk, tb, min(i + 1, m)), ordinary * gamma))
    return out


@dataclass(frozen=True)
class BalanceSystem:
    """Transition-rate structure of the chain.

    ``rates[s, t]`` is the jump rate from state index ``s`` to ``t``;
    ``outflow`` its row sums.  The global balance equations read
    ``rates.T @ pi == outflow * pi`` and the normalization row closes the
    system.
    """

    states: tuple
    index: dict
    rates: np.ndarray
    outflow: np.ndarray

    def balance_residual(self, pi: np.ndarray) -> float:
        return float(np.max(np.abs(self.rates.T @ pi - self.outflow * pi)))


def build_balance_system(params: CtmcParams) -> BalanceSystem:
    """Assemble the full rate matrix plus outflow vector."""
    total = state_count(params)
    if total > _MAX_STATES:
        raise DomainError(
            f"state space too large for a dense solve: {total} > {_MAX_STATES}"
        )
    states = enumerate_states(params)
    index = {s: j for j, s in enumerate(states)}
    rates = np.zeros((total, total))
    for s in states:
        j = index[s]
        for target, rate in _transitions(params, s):
            rates[j, index[target]] += rate
    outflow = rates.sum(axis=1)
    return BalanceSystem(tuple(states), index, rates, outflow)


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary probabilities with the achieved balance residual."""

    states: tuple
    probabilities: np.ndarray
    residual: float

    def probability(self, state: CtmcState) -> float:
        return float(self.probabilities[self.states.index(state)])

    def as_dict(self) -> dict:
        return {s: float(p) for s, p in zip(self.states, self.probabilities)}


def solve_stationary(system: BalanceSystem, *, tol: float = 1e-10,
                     max_refinements: int = 5) -> StationaryDistribution:
    """Solve the global balance equations for the stationary distribution.

    Direct dense solve with the last balance row replaced by the
    normalization, followed by iterative residual refinement until the
    balance violation is at most ``tol``.
    """
    a = system.rates.T - np.diag(system.outflow)
    total = len(system.outflow)
    m = a.copy()
    m[-1, :] = 1.0
    rhs = np.zeros(total)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(m, rhs)
        for _ in range(max_refinements):
            if np.max(np.abs(m @ pi - rhs)) <= tol * 1e-2:
                break
            pi += np.linalg.solve(m, rhs - m @ pi)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stationary solve failed: {exc}") from exc
    if pi.min() < -1e-9:
        raise NumericalError(
            f"stationary solve produced probability {pi.min():.3e} < 0"
        )
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = system.balance_residual(pi)
    if residual > tol:
        raise NumericalError(
            f"balance residual {residual:.3e} exceeds tolerance {tol:.1e}"
        )
    return StationaryDistribution(system.states, pi, residual)


def _sp_payment_level(params: CtmcParams, k: int, b: int, i: int) -> int | None:
    """Fee level the strategic bidder pays when the block fires in
    (k, b, i); None when his transaction misses the block."""
    if i <= k - 1:
        return b
    if b >= 2 and i <= params.m - 1:
        return b - 1
    return None


def expected_utility_per_round(params: CtmcParams, dist: StationaryDistribution, *,
                               runner_up_wins: bool = True) -> float:
    """Strategic bidder's expected utility per mining round.

    Computed as the award-weighted mass of the post-block states divided by
    the total post-block mass (generated states plus the empty state), in
    bump-increment units times ``eta``.

    ``runner_up_wins=False`` switches to the diagnostic reading in which
    only a fee at the very top level ever wins; the default reading is the
    one that matches event simulation.
    """
    award_total = 0.0
    denom = 0.0
    for state, p in zip(dist.states, dist.probabilities):
        if state.kind == ZERO:
            denom += p
        elif state.kind == GENERATED:
            denom += p
            level = _sp_payment_level(params, state.k, state.b, state.i)
            if level is not None and (runner_up_wins or level == state.b):
                award_total += (params.v_hat - level) * p
    if denom <= 0.0:
        raise NumericalError("no post-block probability mass; chain is degenerate")
    return params.eta * award_total / denom


def sp_win_probability(params: CtmcParams, dist: StationaryDistribution) -> float:
    """Probability that a round ends with the strategic bidder included."""
    win = 0.0
    for state, p in zip(dist.states, dist.probabilities):
        if state.kind == PENDING:
            if _sp_payment_level(params, state.k, state.b, state.i) is not None:
                win += p
    return win


@dataclass(frozen=True)
class SweepPoint:
    value: float
    utility: float
    residual: float
    state_count: int


def _solve_point(params: CtmcParams) -> SweepPoint:
    dist = solve_stationary(build_balance_system(params))
    util = float(expected_utility_per_round(params, dist))
    return SweepPoint(0.0, util, float(dist.residual), len(dist.states))


def _max_workers() -> int:
    raw = os.environ.get("FEESIM_MAX_WORKERS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return max(1, os.cpu_count() or 1)


def sweep(params: CtmcParams, vary: str, grid) -> list[SweepPoint]:
    """Re-solve the chain along a grid of one parameter.

    ``vary`` is one of ``gamma_s``, ``gamma``, ``v_hat``, ``m``, ``n``.
    Grid points are solved independently (optionally in parallel, capped by
    the FEESIM_MAX_WORKERS environment variable) and returned in grid
    order, so results do not depend on scheduling.
    """
    if vary not in SWEEPABLE:
        raise DomainError(f"cannot sweep {vary!r}; choose one of {SWEEPABLE}")
    values = list(grid)
    cast = int if vary in ("v_hat", "m", "n") else float
    points = [replace(params, **{vary: cast(v)}) for v in values]
    workers = min(_max_workers(), max(len(points), 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(_solve_point, points))
    else:
        solved = [_solve_point(p) for p in points]
    return [replace(s, value=float(v)) for v, s in zip(values, solved)]
