"""Portfolio strategies, exact wealth evolution, and objective evaluation.

The optimal controls for the solved h are

    pi(t, y) = theta(y) / (1 - gamma)        fraction-type exposure
    c(t, y)  = h(t, y) ** (-q*)              consumption fraction in (0, 1]

and the wealth under a strategy with exposure pi and consumption c follows

    dX = X * (r + pi * theta - c) dt + X * pi dW,

integrated here step-exactly as X_{k+1} = X_k exp((a - b^2/2) dt + b dW_k)
with coefficients frozen per step, which keeps wealth positive on every
path.  An estimated strategy evaluates both slots of the drift with its own
(estimated) risk premium, matching the definition of the estimated value
process it is compared against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .hjb import HjbSolution
from .model import ModelParams
from .simulate import PathBatch, PathBundle

__all__ = [
    "OptimalStrategy",
    "EstimatedStrategy",
    "ZeroInvestmentStrategy",
    "PerturbedStrategy",
    "StrategyKind",
    "optimal_controls",
    "strategy_controls",
    "wealth_coefficients",
    "strategy_coefficients",
    "evolve_wealth",
    "value_from_h",
    "StrategyOutcome",
    "BatchStrategyOutcome",
]


@dataclass(frozen=True)
class OptimalStrategy:
    """Optimal controls derived from a solution under the true parameters."""

    solution: HjbSolution


@dataclass(frozen=True)
class EstimatedStrategy:
    """Controls from a solution solved under estimated drift parameters.

    ``mu_hat = None`` means the appreciation rate is known; the risk premium
    then coincides with the true one.
    """

    solution: HjbSolution
    alpha_hat: float
    mu_hat: float | None = None


@dataclass(frozen=True)
class ZeroInvestmentStrategy:
    """No stock exposure; consumption fraction equal to the interest rate.

    Wealth is exactly constant: dX = X (r - c) dt with c = r.  Used on the
    observation window before trading starts.
    """


@dataclass(frozen=True)
class PerturbedStrategy:
    """Competitor scaling the base strategy's controls by fixed factors."""

    base: "StrategyKind"
    pi_factor: float = 1.0
    c_factor: float = 1.0


StrategyKind = OptimalStrategy | EstimatedStrategy | ZeroInvestmentStrategy | PerturbedStrategy


def optimal_controls(solution: HjbSolution, params: ModelParams, t: float, y):
    """(pi, c) of the optimal strategy at (t, y); c lies in (0, 1]."""
    theta = (params.mu - params.r) / np.asarray(params.vol.evaluate(y))
    pi = theta / (1.0 - params.gamma)
    c = np.power(solution.interpolate(t, y), -params.q_star)
    return pi, c


def _premium(strategy, params: ModelParams, y):
    """Risk premium as seen by the strategy (estimated mu if it has one)."""
    if isinstance(strategy, EstimatedStrategy) and strategy.mu_hat is not None:
        mu = strategy.mu_hat
    else:
        mu = params.mu
    return (mu - params.r) / np.asarray(params.vol.evaluate(y))


def strategy_controls(strategy: StrategyKind, params: ModelParams, t: float, y):
    """(pi, c) for any strategy kind, vectorized over y."""
    y_arr = np.asarray(y, dtype=float)
    if isinstance(strategy, ZeroInvestmentStrategy):
        zero = np.zeros_like(y_arr)
        return zero, np.full_like(y_arr, params.r)
    if isinstance(strategy, PerturbedStrategy):
        pi, c = strategy_controls(strategy.base, params, t, y)
        return strategy.pi_factor * pi, strategy.c_factor * c
    theta = _premium(strategy, params, y_arr)
    pi = theta / (1.0 - params.gamma)
    c = np.power(strategy.solution.interpolate(t, y_arr), -params.q_star)
    return pi, c


def wealth_coefficients(solution: HjbSolution, params: ModelParams, t: float, y, mu: float | None = None):
    """Drift and volatility (a, b) of the optimal wealth process.

    a = theta^2/(1-gamma) + r - h^{-q*},  b = theta/(1-gamma); with ``mu``
    supplied, theta is evaluated at that (estimated) appreciation rate.
    """
    mu_eff = params.mu if mu is None else mu
    theta = (mu_eff - params.r) / np.asarray(params.vol.evaluate(y))
    b = theta / (1.0 - params.gamma)
    c = np.power(solution.interpolate(t, y), -params.q_star)
    a = theta * b + params.r - c
    return a, b


def strategy_coefficients(strategy: StrategyKind, params: ModelParams, t: float, y):
    """(a, b, c) of the wealth dynamics under any strategy kind.

    a = r + pi*theta - c with theta as the strategy sees it, b = pi.
    """
    pi, c = strategy_controls(strategy, params, t, y)
    if isinstance(strategy, ZeroInvestmentStrategy):
        theta = np.zeros_like(np.asarray(y, dtype=float))
    elif isinstance(strategy, PerturbedStrategy):
        theta = _premium(strategy.base, params, y)
    else:
        theta = _premium(strategy, params, y)
    a = params.r + pi * theta - c
    return a, pi, c


@dataclass
class StrategyOutcome:
    """Realized wealth, consumption, and utility along one path."""

    x_path: NDArray
    consumption_path: NDArray
    utility_integral: float
    terminal_utility: float
    objective: float
    pi_squared_integral: float
    consumption_rate_integral: float


@dataclass
class BatchStrategyOutcome:
    """Vectorized outcomes for a whole path batch (rows are paths)."""

    x: NDArray
    consumption: NDArray
    utility_integral: NDArray
    terminal_utility: NDArray
    objective: NDArray
    pi_squared_integral: NDArray
    consumption_rate_integral: NDArray

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def outcome(self, i: int) -> StrategyOutcome:
        return StrategyOutcome(
            x_path=self.x[i],
            consumption_path=self.consumption[i],
            utility_integral=float(self.utility_integral[i]),
            terminal_utility=float(self.terminal_utility[i]),
            objective=float(self.objective[i]),
            pi_squared_integral=float(self.pi_squared_integral[i]),
            consumption_rate_integral=float(self.consumption_rate_integral[i]),
        )


def evolve_wealth(
    strategy: StrategyKind,
    bundle: PathBundle | PathBatch,
    solution: HjbSolution | None,
    params: ModelParams,
    x0: float,
):
    """Evolve wealth along simulated factor paths and score the objective.

    Consumption utility is integrated by the trapezoid rule over the part
    of the grid at or after ``t0`` (the objective starts when trading
    starts, so an observation-window leg contributes nothing).  Returns a
    ``StrategyOutcome`` for a single bundle, ``BatchStrategyOutcome`` for a
    batch.  Admissibility integrals are accumulated and checked finite.
    """
    if x0 <= 0.0:
        raise ValueError(f"x0 must be positive, got {x0}")
    single = isinstance(bundle, PathBundle)
    if single:
        y = bundle.y_path[None, :]
        dw = bundle.w_increments[None, :]
        grid = bundle.grid
    else:
        y = bundle.y
        dw = bundle.dw
        grid = bundle.grid

    if not isinstance(strategy, ZeroInvestmentStrategy):
        if abs(grid.start - params.t0) > 1e-9 or abs(grid.end - params.horizon) > 1e-9:
            raise ValueError(
                f"trading strategies require a grid on [{params.t0}, {params.horizon}], "
                f"got [{grid.start}, {grid.end}]"
            )
        sol = solution if solution is not None else _strategy_solution(strategy)
        if sol is not None and _strategy_solution(strategy) is not None \
                and sol is not _strategy_solution(strategy):
            raise ValueError("solution does not match the one the strategy carries")

    times = grid.times()
    dt = grid.dt
    n_paths, n_nodes = y.shape
    gamma = params.gamma

    x = np.empty((n_paths, n_nodes))
    cons = np.empty((n_paths, n_nodes))
    x[:, 0] = x0
    util = np.zeros(n_paths)
    pi_sq = np.zeros(n_paths)
    c_int = np.zeros(n_paths)

    counted = times >= params.t0 - 1e-12
    a_k, b_k, c_k = strategy_coefficients(strategy, params, times[0], y[:, 0])
    cons[:, 0] = c_k * x[:, 0]
    for k in range(n_nodes - 1):
        x[:, k + 1] = x[:, k] * np.exp((a_k - 0.5 * b_k * b_k) * dt + b_k * dw[:, k])
        pi_sq += 0.5 * dt * (b_k * b_k)
        c_int += 0.5 * dt * c_k
        a_next, b_next, c_next = strategy_coefficients(strategy, params, times[k + 1], y[:, k + 1])
        cons[:, k + 1] = c_next * x[:, k + 1]
        pi_sq += 0.5 * dt * (b_next * b_next)
        c_int += 0.5 * dt * c_next
        if counted[k] and counted[k + 1]:
            util += 0.5 * dt * (
                np.power(cons[:, k], gamma) + np.power(cons[:, k + 1], gamma)
            )
        a_k, b_k, c_k = a_next, b_next, c_next

    if not (np.all(np.isfinite(pi_sq)) and np.all(np.isfinite(c_int))):
        raise FloatingPointError("admissibility integrals are not finite")
    if not np.all(x > 0.0):
        raise FloatingPointError("wealth lost positivity")

    terminal = np.power(x[:, -1], gamma)
    objective = util + terminal
    batch = BatchStrategyOutcome(
        x=x,
        consumption=cons,
        utility_integral=util,
        terminal_utility=terminal,
        objective=objective,
        pi_squared_integral=pi_sq,
        consumption_rate_integral=c_int,
    )
    return batch.outcome(0) if single else batch


def _strategy_solution(strategy: StrategyKind) -> HjbSolution | None:
    if isinstance(strategy, PerturbedStrategy):
        return _strategy_solution(strategy.base)
    return getattr(strategy, "solution", None)


def value_from_h(solution: HjbSolution, x0: float, y: float, t: float | None = None) -> float:
    """Closed-form objective value x0**gamma * h(t, y).

    ``t`` defaults to the start of the trading window.
    """
    if x0 <= 0.0:
        raise ValueError(f"x0 must be positive, got {x0}")
    t_eval = solution.t0 if t is None else t
    return x0**solution.gamma * solution.interpolate(t_eval, y)
