"""feesim: strategy evaluation and simulation for blockchain transaction
fees and broadcast timing against observable mempools."""

__version__ = "0.1.0"

from .ctmc import (
    BalanceSystem,
    CtmcParams,
    CtmcState,
    StationaryDistribution,
    SweepPoint,
    build_balance_system,
    enumerate_states,
    expected_utility_per_round,
    solve_stationary,
    sp_win_probability,
    state_count,
    sweep,
)
from .errors import (
    DomainError,
    FeesimError,
    InvalidStateError,
    NumericalError,
    ScenarioError,
)
from .model import (
    ArrivalProcess,
    BlockInterval,
    EmpiricalFees,
    ExponentialInterval,
    FeeDistribution,
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
from .scenario_io import (
    ScenarioDocument,
    parse_scenario,
    parse_scenario_file,
    scenario_digest,
    serialize_scenario,
)
from .simulate import (
    PostponementPoint,
    SimulationReport,
    paired_postponement_experiment,
    semi_strategic_block_states,
    simulate_oblivious,
    simulate_semi_strategic,
)
from .strategies import (
    CurvePoint,
    StrategyDecision,
    baseline_decision,
    delayed_success_prob,
    expected_threshold_fee,
    fbr_decide,
    fbr_wait_decision,
    ibr_optimize,
    ibr_success_prob,
    ibr_success_prob_closed_form,
    ibr_success_prob_series,
    nbr_optimize,
    nbr_success_prob,
    nbr_success_prob_closed_form,
    nbr_success_prob_series,
    pos_wait_expected_utility,
    utility_vs_elapsed_curve,
)
