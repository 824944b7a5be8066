"""Near-minimax linear estimation over ellitopes.

Given noisy observations omega = A x + sigma xi of a signal known to lie in
an ellitope, the package designs the linear estimate H' omega minimizing a
certified worst-case risk bound (a semidefinite program), computes matching
lower bounds on the minimax risk, and provides the S-risk, robust, and
quadratic-maximization companions, all on top of a self-contained dense
conic interior-point solver.
"""

from .ellitope import (
    Ellitope,
    RawEllitope,
    TSet,
    canonicalize,
    direct_product,
    intersect,
    inverse_image,
    linear_image,
    minkowski_sum,
    support_function,
)
from .estimator import (
    EstimationProblem,
    LinearEstimate,
    apply,
    build_linear_estimate,
    empirical_risk,
    exact_risk_on_ellipsoid,
    worst_case_signal,
)
from .experiments import (
    PendulumProblem,
    ScenarioConfig,
    ExperimentRecord,
    build_pendulum_problem,
    gen_random_rotated_A,
    run_pendulum_experiment,
    run_suboptimality_experiment,
)
from .io import read_ellitope, read_matrix, write_ellitope, write_matrix
from .lower_bound import (
    CONTRACTION,
    PARALLELOTOPE,
    QUADRATIC_APPROX,
    RHO_FAMILY,
    BayesianSolution,
    FactorEstimate,
    LowerBoundReport,
    best_refined_lower_bound,
    chi2_tail_bound,
    delta_rho,
    gaussian_quantile,
    lower_bound_rho_family,
    m_star,
    near_optimality_factor,
    phi_gauss,
    refined_lower_bound,
    rho_of_delta,
    simplified_factor,
    solve_bayesian_sdp,
)
from .robust import UncertaintyModel, build_robust_estimate, verify_robust_feasibility
from .s_risk import (
    SRiskEstimate,
    SRiskProblem,
    build_srisk_estimate,
    optimize_S_bisection,
    srisk_lower_bound,
    whole_space_estimate,
)
from .sdp_relaxation import (
    RelaxationResult,
    check_rademacher_moment,
    factor_bound,
    relax_quadratic_max,
    round_rademacher,
    solve_and_round,
)
from .solver import Builder, ConicProgram, ConicSolution, SolverError, solve, solve_or_raise

__version__ = "1.0.0"

__all__ = [
    "BayesianSolution",
    "Builder",
    "CONTRACTION",
    "ConicProgram",
    "ConicSolution",
    "Ellitope",
    "EstimationProblem",
    "ExperimentRecord",
    "FactorEstimate",
    "LinearEstimate",
    "LowerBoundReport",
    "PARALLELOTOPE",
    "PendulumProblem",
    "QUADRATIC_APPROX",
    "RHO_FAMILY",
    "RawEllitope",
    "RelaxationResult",
    "SRiskEstimate",
    "SRiskProblem",
    "ScenarioConfig",
    "SolverError",
    "TSet",
    "UncertaintyModel",
    "apply",
    "best_refined_lower_bound",
    "build_linear_estimate",
    "build_pendulum_problem",
    "build_robust_estimate",
    "build_srisk_estimate",
    "canonicalize",
    "check_rademacher_moment",
    "chi2_tail_bound",
    "delta_rho",
    "direct_product",
    "empirical_risk",
    "exact_risk_on_ellipsoid",
    "factor_bound",
    "gaussian_quantile",
    "gen_random_rotated_A",
    "intersect",
    "inverse_image",
    "linear_image",
    "lower_bound_rho_family",
    "m_star",
    "minkowski_sum",
    "near_optimality_factor",
    "optimize_S_bisection",
    "phi_gauss",
    "read_ellitope",
    "read_matrix",
    "refined_lower_bound",
    "relax_quadratic_max",
    "rho_of_delta",
    "round_rademacher",
    "run_pendulum_experiment",
    "run_suboptimality_experiment",
    "simplified_factor",
    "solve",
    "solve_and_round",
    "solve_bayesian_sdp",
    "solve_or_raise",
    "srisk_lower_bound",
    "support_function",
    "verify_robust_feasibility",
    "whole_space_estimate",
    "worst_case_signal",
    "write_ellitope",
    "write_matrix",
]
