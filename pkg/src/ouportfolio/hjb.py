"""Fixed-point solver for the reduced value PDE.

The value function factorizes as ``x**gamma * h(t, y)`` where ``h`` solves
the quasilinear backward problem

    h_t + Q(y) h + alpha*y*h_y + (beta**2/2) h_yy + (1/q*) h**(1-q*) = 0,
    h(T, y) = 1,

on [t0, T].  ``h`` is the unique fixed point of the linearizing map
``L: f -> u`` where ``u`` solves the same equation with the source frozen
at ``(1/q*) f**(1-q*)``.  ``L`` is a contraction with factor
``lambda = 1/(zeta+1)`` in the weighted sup metric

    rho_star(f, g) = sup exp(-kappa*(T-t)) |f-g|,   kappa = Q_sup + zeta + 1,

so iterating from ``h_0 = 1`` converges; re-optimizing ``zeta`` per
iteration count gives certified super-geometric error bounds.

Two independent evaluations of ``L`` are provided: a Crank-Nicolson scheme
(the production path) and a Monte Carlo expectation over exact OU paths
(the cross-check oracle).  They must agree within MC error; the tests hold
them to that.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import kernels, rng
from .model import ModelParams, QBounds, q_bounds, q_function, q_sup_analytic

__all__ = [
    "SolverError",
    "ConvergenceError",
    "SolverConfig",
    "default_solver_config",
    "HjbSolution",
    "rho_star_distance",
    "apply_operator_pde",
    "apply_operator_mc",
    "fixed_point_solve",
    "operator_residual",
    "zeta_star",
    "supergeometric_bound",
    "r_star_bound",
    "save_solution",
    "load_solution",
]

log = logging.getLogger(__name__)

_PRE_PASS_ITERS = 5
_MC_CHUNK = 4096


class SolverError(RuntimeError):
    """Backward solve failed (ill-posed discretization, bad inputs)."""


class ConvergenceError(SolverError):
    """Fixed-point iteration did not reach the stopping tolerance."""

    def __init__(self, message: str, residual: float, history: list[float]):
        super().__init__(message)
        self.residual = residual
        self.history = history


@dataclass(frozen=True)
class SolverConfig:
    """Discretization and iteration controls.

    ``zeta = None`` selects the contraction parameter automatically from a
    short pre-pass (the per-n optimizer evaluated at the predicted
    iteration count); an explicit value must be positive.
    """

    y_min: float
    y_max: float
    n_y: int = 201
    n_t: int = 401
    zeta: float | None = None
    max_iter: int = 64
    stop_tol: float = 1e-8
    keep_iterates: bool = True

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ValueError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if self.n_y < 3:
            raise ValueError(f"n_y must be >= 3, got {self.n_y}")
        if self.n_t < 2:
            raise ValueError(f"n_t must be >= 2, got {self.n_t}")
        if self.zeta is not None and not self.zeta > 0.0:
            raise ValueError(f"zeta must be positive, got {self.zeta}")
        if self.stop_tol <= 0.0:
            raise ValueError(f"stop_tol must be positive, got {self.stop_tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


def factor_spread(params: ModelParams, alpha: float) -> float:
    """Std. deviation of the factor after one trading window under ``alpha``."""
    t = params.t_tail
    return params.beta * math.sqrt((1.0 - math.exp(2.0 * alpha * t)) / (2.0 * abs(alpha)))


def default_solver_config(
    params: ModelParams,
    alpha: float | None = None,
    n_t: int = 401,
    n_y: int = 201,
    span_sigmas: float = 6.0,
    cover: tuple[float, ...] = (),
    **kwargs,
) -> SolverConfig:
    """Truncated working domain sized to the factor's reachable range.

    The half-width is ``|y0|`` plus ``span_sigmas`` standard deviations of
    the factor under the solve's own drift (and any extra drifts listed in
    ``cover``, e.g. the true drift when solving under an estimate) --
    truncation error at six sigmas is below discretization error.
    """
    alphas = [alpha if alpha is not None else params.alpha, *cover]
    spread = max(factor_spread(params, a) for a in alphas)
    half = abs(params.y0) + span_sigmas * spread
    return SolverConfig(y_min=-half, y_max=half, n_y=n_y, n_t=n_t, **kwargs)


def r_star_bound(q_star_sup: float, t_tail: float) -> float:
    """Uniform upper bound (T_tail + 1) * exp(Q_sup * T_tail) for h."""
    return (t_tail + 1.0) * math.exp(q_star_sup * t_tail)


def rho_star_distance(
    f_grid: NDArray, g_grid: NDArray, kappa: float, t_nodes: NDArray
) -> float:
    """Weighted sup distance sup exp(-kappa*(T-t)) |f-g| on a shared grid."""
    f_grid = np.asarray(f_grid, dtype=float)
    g_grid = np.asarray(g_grid, dtype=float)
    if f_grid.shape != g_grid.shape:
        raise ValueError(f"grid shapes differ: {f_grid.shape} vs {g_grid.shape}")
    t_nodes = np.asarray(t_nodes, dtype=float)
    if f_grid.shape[0] != t_nodes.shape[0]:
        raise ValueError("time axis length does not match the grids")
    prof = np.max(np.abs(f_grid - g_grid), axis=1)
    weights = np.exp(-kappa * (t_nodes[-1] - t_nodes))
    return float(np.max(weights * prof))


# ---------------------------------------------------------------------------
# Discrete operator
# ---------------------------------------------------------------------------


@dataclass
class _Operator:
    """Assembled Crank-Nicolson matrices for one (params, config) pair."""

    params: ModelParams  # effective parameters (estimates substituted)
    config: SolverConfig
    t_nodes: NDArray
    y_nodes: NDArray
    dt: float
    q_vals: NDArray
    qb: QBounds
    l_lo: NDArray
    l_d: NDArray
    l_up: NDArray
    r_lo: NDArray
    r_d: NDArray
    r_up: NDArray


def _build_operator(
    params: ModelParams,
    config: SolverConfig,
    alpha: float | None = None,
    mu: float | None = None,
) -> _Operator:
    eff = params.with_estimates(alpha=alpha, mu=mu)
    y = np.linspace(config.y_min, config.y_max, config.n_y)
    t = np.linspace(eff.t0, eff.horizon, config.n_t)
    dt = (eff.horizon - eff.t0) / (config.n_t - 1)
    dy = y[1] - y[0]
    n = config.n_y

    qv = np.asarray(q_function(eff, y), dtype=float)
    qb = q_bounds(eff, y)
    diffusion = 0.5 * eff.beta * eff.beta
    v = eff.alpha * y

    # Operator A f = Q f + v f_y + D f_yy: assemble (lo, d, up) diagonals.
    a_lo = np.zeros(n - 1)
    a_d = np.zeros(n)
    a_up = np.zeros(n - 1)

    d_yy = diffusion / (dy * dy)
    peclet = np.abs(v) * dy / diffusion
    for j in range(1, n - 1):
        if peclet[j] > 2.0:
            # One-sided advection keeps off-diagonal coefficients nonnegative
            # where mean reversion outruns diffusion near the domain edges.
            if v[j] > 0.0:
                a_lo[j - 1] = d_yy
                a_up[j] = d_yy + v[j] / dy
                a_d[j] = qv[j] - 2.0 * d_yy - v[j] / dy
            else:
                a_lo[j - 1] = d_yy - v[j] / dy
                a_up[j] = d_yy
                a_d[j] = qv[j] - 2.0 * d_yy + v[j] / dy
        else:
            a_lo[j - 1] = d_yy - v[j] / (2.0 * dy)
            a_up[j] = d_yy + v[j] / (2.0 * dy)
            a_d[j] = qv[j] - 2.0 * d_yy
    # Lateral rows: zero second derivative, one-sided inward first derivative.
    a_d[0] = qv[0] - v[0] / dy
    a_up[0] = v[0] / dy
    a_d[n - 1] = qv[n - 1] + v[n - 1] / dy
    a_lo[n - 2] = -v[n - 1] / dy

    half = 0.5 * dt
    op = _Operator(
        params=eff,
        config=config,
        t_nodes=t,
        y_nodes=y,
        dt=dt,
        q_vals=qv,
        qb=qb,
        l_lo=-half * a_lo,
        l_d=1.0 - half * a_d,
        l_up=-half * a_up,
        r_lo=half * a_lo,
        r_d=1.0 + half * a_d,
        r_up=half * a_up,
    )
    piv = kernels.thomas_pivots(op.l_lo, op.l_d, op.l_up)
    if np.any(piv <= 0.0):
        j = int(np.argmax(piv <= 0.0))
        raise SolverError(
            f"nonpositive pivot at y index {j}: grid too coarse for the "
            f"requested drift/diffusion balance"
        )
    return op


def _apply(op: _Operator, f_grid: NDArray) -> NDArray:
    q_star = op.params.q_star
    src = np.power(f_grid, 1.0 - q_star) / q_star
    u_term = np.ones(op.config.n_y)
    return kernels.cn_sweep(
        op.l_lo, op.l_d, op.l_up, op.r_lo, op.r_d, op.r_up,
        np.ascontiguousarray(src), u_term, op.dt,
    )


def apply_operator_pde(
    f_grid: NDArray,
    params: ModelParams,
    config: SolverConfig,
    alpha: float | None = None,
    mu: float | None = None,
) -> NDArray:
    """One application of the linearizing map by Crank-Nicolson.

    ``f_grid`` holds f(t_i, y_j) on the solver grid and must be >= 1
    everywhere (the source ``f**(1-q*)`` is only meaningful there).
    """
    f_grid = np.asarray(f_grid, dtype=float)
    if f_grid.shape != (config.n_t, config.n_y):
        raise ValueError(
            f"f_grid shape {f_grid.shape} does not match grid "
            f"({config.n_t}, {config.n_y})"
        )
    if np.any(f_grid < 1.0 - 1e-12):
        raise ValueError("f_grid must be >= 1 everywhere")
    op = _build_operator(params, config, alpha=alpha, mu=mu)
    return _apply(op, np.maximum(f_grid, 1.0))


def apply_operator_mc(
    f,
    t: float,
    y: float,
    params: ModelParams,
    n_paths: int,
    seed: int,
    alpha: float | None = None,
    mu: float | None = None,
    steps_per_unit: float = 250.0,
) -> tuple[float, float]:
    """Monte Carlo evaluation of the linearizing map at a single point.

    Simulates exact OU paths of the auxiliary factor from (t, y), accumulates
    the exponential of the running integral of Q by the trapezoid rule and
    the outer time integral likewise.  ``f(s, y_array)`` must be vectorized
    in its second argument.  Returns (estimate, standard error).
    """
    if n_paths < 100:
        raise ValueError(f"n_paths must be >= 100 for a meaningful error bar, got {n_paths}")
    eff = params.with_estimates(alpha=alpha, mu=mu)
    if not (eff.t0 - 1e-12 <= t <= eff.horizon + 1e-12):
        raise ValueError(f"t={t} outside [{eff.t0}, {eff.horizon}]")
    span = eff.horizon - t
    if span <= 1e-14:
        return 1.0, 0.0

    n_steps = max(8, int(math.ceil(steps_per_unit * span)))
    dt = span / n_steps
    s_nodes = t + dt * np.arange(n_steps + 1)
    phi = math.exp(eff.alpha * dt)
    nu = eff.beta * math.sqrt((1.0 - phi * phi) / (2.0 * abs(eff.alpha)))
    q_star = eff.q_star

    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    while done < n_paths:
        rows = min(_MC_CHUNK, n_paths - done)
        z = rng.stream(seed, chunk_idx).standard_normal((rows, n_steps))
        eta = kernels.ou_paths(y, phi, nu, z)
        qv = np.asarray(q_function(eff, eta))
        integ = np.empty_like(qv)
        integ[:, 0] = 0.0
        np.cumsum(0.5 * dt * (qv[:, 1:] + qv[:, :-1]), axis=1, out=integ[:, 1:])
        growth = np.exp(integ)

        inner = np.zeros(rows)
        for k in range(n_steps + 1):
            weight = dt if 0 < k < n_steps else 0.5 * dt
            fv = np.asarray(f(s_nodes[k], eta[:, k]), dtype=float)
            inner += weight * np.power(fv, 1.0 - q_star) * growth[:, k]
        vals = growth[:, -1] + inner / q_star
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += rows
        chunk_idx += 1

    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0)
    se = math.sqrt(var / n_paths)
    return mean, se


# ---------------------------------------------------------------------------
# Fixed-point iteration
# ---------------------------------------------------------------------------


@dataclass
class HjbSolution:
    """Solved h(t, y) with interpolation and convergence certificates.

    ``rho_star_history[k]`` is the weighted distance between iterates k+1
    and k; ``certificates[k]`` the theoretical bound on the remaining
    distance to the fixed point after k+1 iterations with the contraction
    parameter re-optimized at that count; ``sup_deviations`` the measured
    sup-norm gaps to the final iterate.  Certificates are grid suprema on
    the truncated domain rather than suprema over the whole line.
    """

    t_nodes: NDArray
    y_nodes: NDArray
    h_grid: NDArray
    alpha: float
    mu: float
    gamma: float
    zeta: float
    kappa: float
    r_star: float
    q_bounds: QBounds
    rho_star_history: list[float]
    certificates: list[float]
    sup_deviations: list[float] | None
    clamp_counts: list[int]
    residual: float
    converged: bool
    config: SolverConfig
    params_key: tuple
    iterates: list[NDArray] | None = None
    _warned_extrapolation: bool = field(default=False, repr=False)

    @property
    def t0(self) -> float:
        return float(self.t_nodes[0])

    @property
    def horizon(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def n_iterations(self) -> int:
        return len(self.rho_star_history)

    def interpolate(self, t: float, y):
        """Bilinear interpolation of h at (t, y).

        ``y`` may be a scalar or an array; values beyond the lateral domain
        use constant extrapolation (warned once per solution).  The result
        is clamped to the admissible band [1, r_star].
        """
        if not (self.t0 - 1e-12 <= t <= self.horizon + 1e-12):
            raise ValueError(f"t={t} outside [{self.t0}, {self.horizon}]")
        y_arr = np.asarray(y, dtype=float)
        scalar = y_arr.ndim == 0
        y_arr = np.atleast_1d(y_arr)
        y_lo, y_hi = self.y_nodes[0], self.y_nodes[-1]
        if (np.any(y_arr < y_lo) or np.any(y_arr > y_hi)) and not self._warned_extrapolation:
            log.warning(
                "interpolating h outside [%g, %g]: constant extrapolation in y",
                y_lo, y_hi,
            )
            self._warned_extrapolation = True
        y_c = np.clip(y_arr, y_lo, y_hi)

        dt_g = (self.horizon - self.t0) / (len(self.t_nodes) - 1)
        ft = (float(t) - self.t0) / dt_g
        i0 = min(max(int(math.floor(ft)), 0), len(self.t_nodes) - 2)
        wt = min(max(ft - i0, 0.0), 1.0)

        dy_g = (y_hi - y_lo) / (len(self.y_nodes) - 1)
        fy = (y_c - y_lo) / dy_g
        j0 = np.clip(np.floor(fy).astype(int), 0, len(self.y_nodes) - 2)
        wy = np.clip(fy - j0, 0.0, 1.0)

        row0 = self.h_grid[i0, j0] * (1.0 - wy) + self.h_grid[i0, j0 + 1] * wy
        row1 = self.h_grid[i0 + 1, j0] * (1.0 - wy) + self.h_grid[i0 + 1, j0 + 1] * wy
        out = np.clip(row0 * (1.0 - wt) + row1 * wt, 1.0, self.r_star)
        return float(out[0]) if scalar else out

    def __call__(self, t, y):
        return self.interpolate(t, y)


def zeta_star(n: int, t_tail: float) -> float:
    """Contraction parameter minimizing the n-step error bound.

    Minimizer of g_n(x) = x*T - ln x - (n-1) ln(1+x) over x > 0 for
    T = t_tail; always positive.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if t_tail <= 0.0:
        raise ValueError(f"t_tail must be positive, got {t_tail}")
    return (math.sqrt((t_tail - n) ** 2 + 4.0 * t_tail) + n - t_tail) / (2.0 * t_tail)


def supergeometric_bound(
    n: int,
    zeta: float,
    params: ModelParams,
    q_star_sup: float | None = None,
) -> float:
    """Certified bound on sup |h - h_n| after n iterations at given zeta.

    Equals ``B * lambda**n`` with ``lambda = 1/(zeta+1)`` and
    ``B = exp(kappa*T) (1 + r_star) / (1 - lambda)``; evaluated at
    ``zeta_star(n)`` it decays faster than any geometric sequence.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if zeta <= 0.0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    q_sup = q_sup_analytic(params) if q_star_sup is None else q_star_sup
    t_tail = params.t_tail
    lam = 1.0 / (zeta + 1.0)
    kappa = q_sup + zeta + 1.0
    big_b = math.exp(kappa * t_tail) * (1.0 + r_star_bound(q_sup, t_tail)) / (1.0 - lam)
    return big_b * lam**n


def _auto_zeta(profiles: list[NDArray], op: _Operator, stop_tol: float) -> float:
    """Pick zeta from a short pre-pass: optimize at the predicted count."""
    t_tail = op.params.horizon - op.params.t0
    kappa_pre = op.qb.q_star_sup + 2.0  # neutral metric, zeta = 1
    weights = np.exp(-kappa_pre * (op.t_nodes[-1] - op.t_nodes))
    rhos = [float(np.max(weights * p)) for p in profiles]
    n_done = len(rhos)
    if rhos[-1] <= stop_tol or n_done < 2 or rhos[-2] <= 0.0:
        return zeta_star(max(n_done, 1), t_tail)
    ratio = rhos[-1] / rhos[-2]
    if not (0.0 < ratio < 1.0):
        ratio = 0.5
    n_more = math.ceil(math.log(stop_tol / rhos[-1]) / math.log(ratio))
    n_expected = n_done + max(n_more, 0)
    return zeta_star(max(n_expected, 1), t_tail)


def fixed_point_solve(
    params: ModelParams,
    config: SolverConfig,
    alpha: float | None = None,
    mu: float | None = None,
) -> HjbSolution:
    """Iterate the linearizing map from h = 1 until the metric residual
    drops below ``stop_tol``.

    Iterates are clamped from below at 1 (the admissible floor); the clamp
    count per iteration is recorded and logged, a nonzero count signals
    discretization stress rather than an error.  Raises
    ``ConvergenceError`` after ``max_iter`` unsuccessful iterations.
    """
    op = _build_operator(params, config, alpha=alpha, mu=mu)
    t_tail = op.params.horizon - op.params.t0
    n_t, n_y = config.n_t, config.n_y

    h = np.ones((n_t, n_y))
    iterates = [h]
    profiles: list[NDArray] = []
    clamps: list[int] = []
    zeta = config.zeta
    kappa = None if zeta is None else op.qb.q_star_sup + zeta + 1.0

    converged = False
    residual = math.inf
    for n in range(1, config.max_iter + 1):
        u = _apply(op, h)
        n_clamped = int(np.count_nonzero(u < 1.0))
        if n_clamped:
            log.info("iteration %d: clamped %d grid values up to 1", n, n_clamped)
            np.maximum(u, 1.0, out=u)
        profiles.append(np.max(np.abs(u - h), axis=1))
        clamps.append(n_clamped)
        h = u
        iterates.append(h)

        if zeta is None and n >= min(_PRE_PASS_ITERS, config.max_iter):
            zeta = _auto_zeta(profiles, op, config.stop_tol)
            kappa = op.qb.q_star_sup + zeta + 1.0
        if kappa is not None:
            weights = np.exp(-kappa * (op.t_nodes[-1] - op.t_nodes))
            residual = float(np.max(weights * profiles[-1]))
            if residual <= config.stop_tol:
                converged = True
                break

    if zeta is None:  # max_iter < pre-pass length and no explicit zeta
        zeta = _auto_zeta(profiles, op, config.stop_tol)
        kappa = op.qb.q_star_sup + zeta + 1.0

    weights = np.exp(-kappa * (op.t_nodes[-1] - op.t_nodes))
    rho_history = [float(np.max(weights * p)) for p in profiles]
    residual = rho_history[-1]

    if not converged:
        raise ConvergenceError(
            f"fixed-point iteration did not converge in {config.max_iter} "
            f"iterations: final weighted distance {residual:.3e} > "
            f"stop_tol {config.stop_tol:.3e}",
            residual=residual,
            history=rho_history,
        )

    n_iters = len(rho_history)
    certificates = [
        supergeometric_bound(n, zeta_star(n, t_tail), op.params, op.qb.q_star_sup)
        for n in range(1, n_iters + 1)
    ]
    sup_devs = [float(np.max(np.abs(it - h))) for it in iterates[1:]]

    return HjbSolution(
        t_nodes=op.t_nodes,
        y_nodes=op.y_nodes,
        h_grid=h,
        alpha=op.params.alpha,
        mu=op.params.mu,
        gamma=op.params.gamma,
        zeta=float(zeta),
        kappa=float(kappa),
        r_star=r_star_bound(op.qb.q_star_sup, t_tail),
        q_bounds=op.qb,
        rho_star_history=rho_history,
        certificates=certificates,
        sup_deviations=sup_devs,
        clamp_counts=clamps,
        residual=residual,
        converged=True,
        config=config,
        params_key=params.key(),
        iterates=iterates if config.keep_iterates else None,
    )


def operator_residual(solution: HjbSolution, params: ModelParams) -> float:
    """Weighted distance between L(h) and h at the returned solution."""
    u = apply_operator_pde(
        solution.h_grid, params, solution.config,
        alpha=solution.alpha, mu=solution.mu,
    )
    return rho_star_distance(
        np.maximum(u, 1.0), solution.h_grid, solution.kappa, solution.t_nodes
    )


# ---------------------------------------------------------------------------
# Serialization: JSON manifest + long-format CSV grid
# ---------------------------------------------------------------------------


def save_solution(solution: HjbSolution, directory, stem: str = "solution") -> dict:
    """Write ``{stem}.json`` and ``{stem}_grid.csv``; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    json_path = os.path.join(directory, f"{stem}.json")
    csv_path = os.path.join(directory, f"{stem}_grid.csv")

    manifest = {
        "format": 1,
        "alpha": solution.alpha,
        "mu": solution.mu,
        "gamma": solution.gamma,
        "zeta": solution.zeta,
        "kappa": solution.kappa,
        "r_star": solution.r_star,
        "q_star_sup": solution.q_bounds.q_star_sup,
        "q_deriv_sup": solution.q_bounds.q_deriv_sup,
        "t0": solution.t0,
        "horizon": solution.horizon,
        "n_t": len(solution.t_nodes),
        "n_y": len(solution.y_nodes),
        "y_min": float(solution.y_nodes[0]),
        "y_max": float(solution.y_nodes[-1]),
        "rho_star_history": solution.rho_star_history,
        "certificates": solution.certificates,
        "sup_deviations": solution.sup_deviations,
        "clamp_counts": solution.clamp_counts,
        "residual": solution.residual,
        "converged": solution.converged,
        "certificate_scope": "grid supremum on the truncated y-domain",
        "config": {
            "y_min": solution.config.y_min,
            "y_max": solution.config.y_max,
            "n_y": solution.config.n_y,
            "n_t": solution.config.n_t,
            "zeta": solution.config.zeta,
            "max_iter": solution.config.max_iter,
            "stop_tol": solution.config.stop_tol,
        },
        "params_key": _key_to_json(solution.params_key),
        "grid_csv": os.path.basename(csv_path),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y", "h"])
        for i, t in enumerate(solution.t_nodes):
            for j, y in enumerate(solution.y_nodes):
                writer.writerow([repr(float(t)), repr(float(y)), repr(float(solution.h_grid[i, j]))])
    return {"json": json_path, "csv": csv_path}


def load_solution(directory, stem: str = "solution") -> HjbSolution:
    """Rebuild a solution from ``save_solution`` output.

    Interpolation on the loaded object is bit-identical to the original:
    grid values round-trip through ``repr`` exactly.
    """
    json_path = os.path.join(directory, f"{stem}.json")
    with open(json_path, "r", encoding="utf-8") as fh:
        m = json.load(fh)
    csv_path = os.path.join(directory, m["grid_csv"])

    n_t, n_y = m["n_t"], m["n_y"]
    h = np.empty((n_t, n_y))
    rows_read = 0
    with open(csv_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "y", "h"]:
            raise ValueError(f"unexpected grid CSV header: {header}")
        for count, row in enumerate(reader):
            h[count // n_y, count % n_y] = float(row[2])
            rows_read += 1
    if rows_read != n_t * n_y:
        raise ValueError(f"grid CSV has {rows_read} rows, expected {n_t * n_y}")

    config = SolverConfig(
        y_min=m["config"]["y_min"],
        y_max=m["config"]["y_max"],
        n_y=m["config"]["n_y"],
        n_t=m["config"]["n_t"],
        zeta=m["config"]["zeta"],
        max_iter=m["config"]["max_iter"],
        stop_tol=m["config"]["stop_tol"],
        keep_iterates=False,
    )
    return HjbSolution(
        t_nodes=np.linspace(m["t0"], m["horizon"], n_t),
        y_nodes=np.linspace(m["y_min"], m["y_max"], n_y),
        h_grid=h,
        alpha=m["alpha"],
        mu=m["mu"],
        gamma=m["gamma"],
        zeta=m["zeta"],
        kappa=m["kappa"],
        r_star=m["r_star"],
        q_bounds=QBounds(q_star_sup=m["q_star_sup"], q_deriv_sup=m["q_deriv_sup"]),
        rho_star_history=list(m["rho_star_history"]),
        certificates=list(m["certificates"]),
        sup_deviations=list(m["sup_deviations"]) if m["sup_deviations"] else None,
        clamp_counts=list(m["clamp_counts"]),
        residual=m["residual"],
        converged=m["converged"],
        config=config,
        params_key=_key_from_json(m["params_key"]),
        iterates=None,
    )


def _key_to_json(key):
    return [list(k) if isinstance(k, tuple) else k for k in key]


def _key_from_json(key):
    return tuple(tuple(k) if isinstance(k, list) else k for k in key)
