"""Equilibria of the Gaussian privacy game.

A sender transmits a message that should let a receiver estimate a state x
while revealing as little as possible about correlated private information
w to an eavesdropper on the same channel; both observers also see side
information z and run least-mean-square estimation.  This package builds
the informative and babbling equilibria of that game, evaluates their
costs in closed form through two independent identities, validates them by
Monte Carlo simulation and unilateral-deviation search, and drives the
privacy-ratio experiments from a small CLI (``privacy-game``).
"""

from .costs import (
    CostBreakdown,
    CostOperator,
    DegenerateMessageError,
    baselines,
    cost_operator,
    costs_from_moments,
    costs_with_gains,
    feasibility_check,
    sender_cost_quadratic,
)
from .equilibrium import (
    EquilibriumSolution,
    EstimatorPolicy,
    PrivacyRatio,
    SenderPolicy,
    SolverDiagnostics,
    babbling_equilibrium,
    lmmse_gains,
    scale_equilibrium,
    solve_general,
    solve_scalar,
)
from .experiments import (
    GridRecord,
    SweepRecord,
    run_correlation_grid,
    run_delta_sweep,
)
from .model import (
    ConditionalCovariance,
    Dimensions,
    GaussianModel,
    MessageMoments,
    ModelValidationError,
    Scenario,
    ScenarioFormatError,
    ValidationReport,
    conditional_covariance,
    conditional_gains,
    load_scenario,
    message_moments,
    scenario_from_dict,
    validate_model,
)
from .verification import (
    CoalitionWeight,
    DeviationReport,
    MonteCarloResult,
    OracleResult,
    SimulationConfig,
    check_coalition_separation,
    check_estimator_optimality,
    check_sender_deviation,
    monte_carlo_costs,
    oracle_solve,
    sample_game,
)

__version__ = "0.1.0"
