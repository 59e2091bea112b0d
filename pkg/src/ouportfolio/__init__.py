"""Consumption-investment optimization under an OU volatility factor.

Solve the reduced value PDE by contraction iteration with certified
convergence, build the optimal strategy, estimate unknown drifts
sequentially from observations, and certify how suboptimal acting on the
estimates can be.
"""

from .bounds import (
    ConstantsLedger,
    delta_known_mu,
    delta_unknown_mu,
    deviation_bound_h,
    h1_star,
    ledger,
    max_endowment,
    rho_tilde_distance,
)
from .estimate import (
    EstimationReport,
    epsilon1_bound,
    epsilon_bound,
    mu_estimate,
    replicate_estimation,
    sequential_alpha,
    stopping_time,
)
from .hjb import (
    ConvergenceError,
    HjbSolution,
    SolverConfig,
    SolverError,
    apply_operator_mc,
    apply_operator_pde,
    default_solver_config,
    fixed_point_solve,
    load_solution,
    rho_star_distance,
    save_solution,
    supergeometric_bound,
    zeta_star,
)
from .model import (
    ConfigError,
    ModelParams,
    QBounds,
    VolatilitySpec,
    load_params,
    q_bounds,
    q_function,
    risk_premium,
)
from .simulate import (
    PathBatch,
    PathBundle,
    TimeGrid,
    ito_integral_y_dy,
    ou_step,
    simulate_paths,
)
from .strategy import (
    EstimatedStrategy,
    OptimalStrategy,
    PerturbedStrategy,
    ZeroInvestmentStrategy,
    evolve_wealth,
    optimal_controls,
    value_from_h,
    wealth_coefficients,
)

__version__ = "0.1.0"
