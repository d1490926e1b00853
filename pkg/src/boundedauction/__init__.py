"""Optimal single-item auctions when each bidder may send only a few bits."""

from .distributions import TableDistribution, Uniform, ValueDistribution, VirtualTransform, parse_distribution
from .errors import (
    CertificationError,
    CharacterizationOpenError,
    DegeneracyError,
    NotRegularError,
    SolverError,
    StructuralError,
)
from .evaluation import (
    EvaluationReport,
    benchmark_unbounded,
    best_response_thresholds,
    evaluate,
    evaluate_priority,
    expected_profit_exact,
    expected_virtual_surplus_exact,
    expected_welfare_exact,
    monte_carlo_evaluate,
    verify_dominant_strategy,
    verify_ex_post_ir,
    verify_interim_ir,
)
from .mechanism import (
    PrioritySpec,
    SimultaneousMechanism,
    StrategyProfile,
    ThresholdVector,
    build_game,
    build_modified_priority_game,
    build_priority_game,
    equally_spaced_thresholds,
    mechanism_from_json,
    mechanism_to_json,
    monotonize,
)
from .oracle import certify_2bidder_optimality, enumerate_monotone_2bidder
from .profit import VirtualDistribution, solve_profit_optimal
from .sequential import (
    Decision,
    Leaf,
    backward_induction_best_response,
    communication_requirement,
    evaluate_sequential,
    flatten_to_simultaneous,
)
from .solver import (
    SolverConfig,
    quantile_mechanism,
    solve_mpg_thresholds,
    solve_mutually_centered,
    solve_n_bidder_welfare_2bid,
    solve_welfare_2bidder,
    symmetric_optimal_1bit,
)

__version__ = "0.1.0"
