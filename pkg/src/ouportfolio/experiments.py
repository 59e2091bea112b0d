"""End-to-end experiment drivers with reproducible manifests.

Everything here is seed-deterministic: replication ``i`` draws from the
substream ``(seed, salt, i)``, chunked Monte Carlo uses one substream per
fixed-size chunk, and reductions run in stream order, so a rerun with the
same manifest reproduces every number bit-exactly regardless of threading.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .bounds import delta_known_mu, delta_unknown_mu, ledger
from .estimate import (
    epsilon1_bound,
    epsilon_bound,
    mu_estimate,
    replicate_estimation,
    sequential_alpha,
)
from .hjb import (
    ConvergenceError,
    HjbSolution,
    SolverConfig,
    default_solver_config,
    fixed_point_solve,
)
from .kernels import ou_paths as _ou_paths
from .model import ModelParams, VolatilitySpec, params_to_mapping
from .simulate import TimeGrid, ou_transition, simulate_paths
from .strategy import (
    EstimatedStrategy,
    OptimalStrategy,
    PerturbedStrategy,
    StrategyKind,
    ZeroInvestmentStrategy,
    evolve_wealth,
    value_from_h,
)

__all__ = [
    "ExperimentManifest",
    "write_manifest",
    "demo_params",
    "mc_value",
    "paired_values",
    "optimality_report",
    "PipelineRow",
    "PipelineResult",
    "delta_pipeline",
    "reproduce_fig1",
    "reproduce_fig2",
    "write_delta_report",
]

_CHUNK_PATHS = 4096
_EST_SALT = 101
_INNER_SALT = 202
_VALUE_SALT = 303


def demo_params(
    t0: float = 5.0,
    horizon: float | None = None,
    mu_bounds: tuple[float, float] = (0.01, 0.02),
    alpha_bounds: tuple[float, float] = (-10.0, -0.15),
) -> ModelParams:
    """Benchmark parameter set used across the examples and figures.

    Oscillating volatility 0.5 + sin(y)^2, r = 1%, mu = 2%, gamma = 0.75,
    strongly mean-reverting factor (alpha = -5, beta = 1) started at 0;
    one unit of trading time after the observation window.
    """
    return ModelParams(
        r=0.01,
        mu=0.02,
        mu_bounds=mu_bounds,
        alpha=-5.0,
        alpha_bounds=alpha_bounds,
        beta=1.0,
        y0=0.0,
        gamma=0.75,
        t0=t0,
        horizon=(t0 + 1.0) if horizon is None else horizon,
        vol=VolatilitySpec.sin_squared(0.5, 1.0),
    )


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass
class ExperimentManifest:
    """What was run, with what inputs, and where the outputs went."""

    kind: str
    params: dict
    seeds: dict
    configs: dict
    outputs: list
    wall_clock_s: float
    content_hash: str


def _content_hash(kind: str, params: dict, seeds: dict, configs: dict) -> str:
    blob = json.dumps(
        {"kind": kind, "params": params, "seeds": seeds, "configs": configs},
        sort_keys=True,
    ).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(out_dir, kind, params, seeds, configs, outputs, wall) -> str:
    manifest = ExperimentManifest(
        kind=kind,
        params=params,
        seeds=seeds,
        configs=configs,
        outputs=[os.path.basename(p) for p in outputs],
        wall_clock_s=wall,
        content_hash=_content_hash(kind, params, seeds, configs),
    )
    path = os.path.join(out_dir, f"{kind}_manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _map_ordered(fn, items, threads: int):
    """Apply ``fn`` preserving order; thread count 0 means a small auto pool."""
    n_threads = min(4, os.cpu_count() or 1) if threads == 0 else threads
    if n_threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Monte Carlo objective evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _FactorPaths:
    """Minimal path container for wealth evolution (factor and W only)."""

    grid: TimeGrid
    y: np.ndarray
    dw: np.ndarray


def _validate_pairing(strategy: StrategyKind, params: ModelParams) -> None:
    base = strategy.base if isinstance(strategy, PerturbedStrategy) else strategy
    if isinstance(base, OptimalStrategy):
        if base.solution.params_key != params.key():
            raise ValueError("optimal strategy's solution was solved under different parameters")
    elif isinstance(base, EstimatedStrategy):
        sol = base.solution
        if not math.isclose(sol.alpha, base.alpha_hat, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError("estimated strategy's solution does not match its drift estimate")
        mu_expected = params.mu if base.mu_hat is None else base.mu_hat
        if not math.isclose(sol.mu, mu_expected, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError("estimated strategy's solution does not match its rate estimate")


def paired_values(
    strategies: list[StrategyKind],
    params: ModelParams,
    x0: float,
    y0: float,
    n_paths: int,
    seed: int,
    steps_per_unit: float = 500.0,
    t_start: float | None = None,
    salt: int = _VALUE_SALT,
):
    """Common-random-number objective estimates for several strategies.

    All strategies are evaluated on identical factor/market paths; returns
    ``(means, ses, diff_means, diff_ses)`` where the differences are
    ``strategies[0] - strategies[k]`` with their paired standard errors.
    """
    if n_paths < 100:
        raise ValueError(f"n_paths must be >= 100, got {n_paths}")
    for s in strategies:
        _validate_pairing(s, params)
    t0 = params.t0 if t_start is None else float(t_start)
    span = params.horizon - t0
    if span <= 1e-14:
        k = len(strategies)
        base = x0**params.gamma
        return [base] * k, [0.0] * k, [0.0] * (k - 1), [0.0] * (k - 1)
    if abs(t0 - params.t0) > 1e-12:
        raise ValueError("evaluation must start at the trading window or at the horizon")

    n_steps = max(8, int(math.ceil(steps_per_unit * span)))
    dt = span / n_steps
    grid = TimeGrid(t0, params.horizon, n_steps)
    phi, nu = ou_transition(params.alpha, params.beta, dt)
    sqdt = math.sqrt(dt)

    k = len(strategies)
    tot = np.zeros(k)
    tot_sq = np.zeros(k)
    dtot = np.zeros(k)
    dtot_sq = np.zeros(k)
    done = 0
    chunk_idx = 0
    while done < n_paths:
        rows = min(_CHUNK_PATHS, n_paths - done)
        z = rng.stream(seed, salt, chunk_idx).standard_normal((rows, 2, n_steps))
        y = _ou_paths(y0, phi, nu, np.ascontiguousarray(z[:, 0, :]))
        paths = _FactorPaths(grid=grid, y=y, dw=z[:, 1, :] * sqdt)

        objectives = []
        for strat in strategies:
            out = evolve_wealth(strat, paths, None, params, x0)
            objectives.append(out.objective)
        for i, obj in enumerate(objectives):
            tot[i] += obj.sum()
            tot_sq[i] += (obj * obj).sum()
            if i > 0:
                d = objectives[0] - obj
                dtot[i] += d.sum()
                dtot_sq[i] += (d * d).sum()
        done += rows
        chunk_idx += 1

    means = tot / n_paths
    var = np.maximum(tot_sq / n_paths - means**2, 0.0)
    ses = np.sqrt(var / n_paths)
    dmeans = dtot[1:] / n_paths
    dvar = np.maximum(dtot_sq[1:] / n_paths - dmeans**2, 0.0)
    dses = np.sqrt(dvar / n_paths)
    return (
        [float(v) for v in means],
        [float(v) for v in ses],
        [float(v) for v in dmeans],
        [float(v) for v in dses],
    )


def mc_value(
    strategy: StrategyKind,
    params: ModelParams,
    solution: HjbSolution | None,
    x0: float,
    y0: float,
    n_paths: int,
    seed: int,
    steps_per_unit: float = 500.0,
    t_start: float | None = None,
    salt: int = _VALUE_SALT,
) -> tuple[float, float]:
    """Monte Carlo estimate of the expected objective under one strategy.

    ``solution``, when given, must be the one the strategy carries (the
    pairing is validated); simulation always runs under the true ``params``.
    """
    if solution is not None:
        base = strategy.base if isinstance(strategy, PerturbedStrategy) else strategy
        carried = getattr(base, "solution", None)
        if carried is not None and carried is not solution:
            raise ValueError("solution argument does not match the strategy's own solution")
    means, ses, _, _ = paired_values(
        [strategy], params, x0, y0, n_paths, seed,
        steps_per_unit=steps_per_unit, t_start=t_start, salt=salt,
    )
    return means[0], ses[0]


def optimality_report(
    params: ModelParams,
    solution: HjbSolution,
    x0: float,
    y0: float,
    n_paths: int,
    seed: int,
    steps_per_unit: float = 500.0,
) -> dict:
    """Optimal strategy vs fixed competitor perturbations, common noise.

    Competitors scale the exposure by 0.8/1.2, the consumption by 0.8/1.2,
    and halve the consumption.  Returns per-strategy estimates, paired
    dominance gaps, and the closed-form value for the verification identity.
    """
    opt = OptimalStrategy(solution)
    strategies: list[StrategyKind] = [
        opt,
        PerturbedStrategy(opt, pi_factor=1.2),
        PerturbedStrategy(opt, pi_factor=0.8),
        PerturbedStrategy(opt, c_factor=1.2),
        PerturbedStrategy(opt, c_factor=0.8),
        PerturbedStrategy(opt, c_factor=0.5),
    ]
    names = ["optimal", "pi+20%", "pi-20%", "c+20%", "c-20%", "c*0.5"]
    means, ses, dmeans, dses = paired_values(
        strategies, params, x0, y0, n_paths, seed, steps_per_unit=steps_per_unit
    )
    return {
        "names": names,
        "means": means,
        "ses": ses,
        "diff_means": dmeans,  # optimal minus competitor
        "diff_ses": dses,
        "closed_form": value_from_h(solution, x0, y0),
        "n_paths": n_paths,
    }


def write_outcome_csv(path, rows: list[dict]) -> None:
    """strategy,x0,y0,paths,objective_mean,objective_se rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "x0", "y0", "paths", "objective_mean", "objective_se"])
        for r in rows:
            writer.writerow(
                [
                    r["strategy"],
                    repr(float(r["x0"])),
                    repr(float(r["y0"])),
                    int(r["paths"]),
                    repr(float(r["objective_mean"])),
                    repr(float(r["objective_se"])),
                ]
            )


# ---------------------------------------------------------------------------
# Estimate -> resolve -> act -> compare pipeline
# ---------------------------------------------------------------------------


@dataclass
class PipelineRow:
    replication: int
    alpha_hat: float
    mu_hat: float | None
    y_t0: float
    j_hat: float
    j_hat_se: float
    j_star: float
    abs_dev: float
    excluded: bool = False


@dataclass
class PipelineResult:
    rows: list[PipelineRow]
    mode: str
    x0: float
    t0: float
    mean_abs_dev: float
    se_abs_dev: float
    mean_inner_se: float
    delta_bound: float
    delta2_bound: float
    epsilon: float
    epsilon1: float
    n_excluded: int

    def table(self) -> list[tuple]:
        return [
            (r.replication, r.alpha_hat, r.mu_hat, r.j_hat, r.j_star, r.abs_dev)
            for r in self.rows
            if not r.excluded
        ]


def delta_pipeline(
    params: ModelParams,
    x0: float,
    n_reps: int,
    seed: int,
    mode: str = "known",
    n_inner: int = 10_000,
    est_dt: float = 1e-3,
    solver_config: SolverConfig | None = None,
    control: bool = False,
    threads: int = 1,
    inner_steps_per_unit: float = 500.0,
) -> PipelineResult:
    """Full replication study of acting under estimated drift parameters.

    Each replication observes the factor (and, in ``unknown`` mode, the
    stock) on [0, t0] while holding wealth constant under the
    zero-investment policy, estimates the drifts, re-solves h under the
    estimates, runs the estimated strategy on fresh paths conditional on
    the observed factor level, and compares the conditional objective
    against the closed-form optimum.  ``control=True`` short-circuits the
    estimates to the true values, which isolates Monte Carlo and
    discretization error.  Replications whose resolve step fails to
    converge are excluded and counted.
    """
    if n_reps < 1:
        raise ValueError(f"n_reps must be >= 1, got {n_reps}")
    if mode not in ("known", "unknown"):
        raise ValueError(f"mode must be 'known' or 'unknown', got {mode!r}")
    if x0 <= 0.0:
        raise ValueError(f"x0 must be positive, got {x0}")

    base_config = solver_config or default_solver_config(
        params, n_t=201, n_y=141, cover=(params.alpha_bounds[1],)
    )
    true_solution = fixed_point_solve(params, base_config)
    led = ledger(params, true_solution)

    n_est = max(1, int(round(params.t0 / est_dt)))
    obs_grid = TimeGrid(0.0, params.t0, n_est)

    def run_one(rep: int) -> PipelineRow:
        batch = simulate_paths(
            params, obs_grid, s0=1.0, n_paths=1,
            seed=rng.mix64(seed, _EST_SALT), first_stream=rep,
        )
        bundle = batch.bundle(0)
        y_t0 = float(bundle.y_path[-1])

        if control:
            alpha_hat = params.alpha
            mu_hat = params.mu if mode == "unknown" else None
        else:
            report = sequential_alpha(bundle.y_path, obs_grid, params)
            alpha_hat = report.alpha_hat
            mu_hat = (
                mu_estimate(bundle.s_path, obs_grid, params.t0)
                if mode == "unknown"
                else None
            )

        if control:
            strat: StrategyKind = OptimalStrategy(true_solution)
        else:
            try:
                sol_hat = fixed_point_solve(
                    params, base_config, alpha=alpha_hat, mu=mu_hat
                )
            except ConvergenceError:
                return PipelineRow(
                    replication=rep, alpha_hat=alpha_hat, mu_hat=mu_hat,
                    y_t0=y_t0, j_hat=float("nan"), j_hat_se=float("nan"),
                    j_star=float("nan"), abs_dev=float("nan"), excluded=True,
                )
            strat = EstimatedStrategy(sol_hat, alpha_hat=alpha_hat, mu_hat=mu_hat)

        j_hat, j_se = mc_value(
            strat, params, None, x0, y_t0, n_inner,
            seed=rng.mix64(seed, _INNER_SALT, rep),
            steps_per_unit=inner_steps_per_unit,
        )
        j_star = float(value_from_h(true_solution, x0, y_t0))
        return PipelineRow(
            replication=rep, alpha_hat=float(alpha_hat),
            mu_hat=None if mu_hat is None else float(mu_hat), y_t0=y_t0,
            j_hat=j_hat, j_hat_se=j_se, j_star=j_star,
            abs_dev=abs(j_hat - j_star),
        )

    rows = _map_ordered(run_one, list(range(n_reps)), threads)

    kept = [r for r in rows if not r.excluded]
    devs = np.array([r.abs_dev for r in kept])
    inner_ses = np.array([r.j_hat_se for r in kept])
    mean_dev = float(devs.mean()) if kept else float("nan")
    se_dev = float(devs.std(ddof=1) / math.sqrt(len(devs))) if len(kept) > 1 else float("nan")

    return PipelineResult(
        rows=rows,
        mode=mode,
        x0=x0,
        t0=params.t0,
        mean_abs_dev=mean_dev,
        se_abs_dev=se_dev,
        mean_inner_se=float(inner_ses.mean()) if kept else float("nan"),
        delta_bound=delta_known_mu(led, x0),
        delta2_bound=delta_unknown_mu(led, x0),
        epsilon=epsilon_bound(params),
        epsilon1=epsilon1_bound(params),
        n_excluded=len(rows) - len(kept),
    )


def write_delta_report(path, result: PipelineResult) -> None:
    """x,t0,mode,epsilon,epsilon1,delta,mc_deviation_mean,mc_deviation_se."""
    delta = result.delta_bound if result.mode == "known" else result.delta2_bound
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["x", "t0", "mode", "epsilon", "epsilon1", "delta",
             "mc_deviation_mean", "mc_deviation_se"]
        )
        writer.writerow(
            [
                repr(result.x0), repr(result.t0), result.mode,
                repr(result.epsilon), repr(result.epsilon1), repr(delta),
                repr(result.mean_abs_dev), repr(result.se_abs_dev),
            ]
        )


def write_pipeline_table(path, result: PipelineResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["replication", "alpha_hat", "mu_hat", "y_t0", "j_hat",
             "j_hat_se", "j_star", "abs_dev", "excluded"]
        )
        for r in result.rows:
            writer.writerow(
                [
                    r.replication,
                    repr(r.alpha_hat),
                    "" if r.mu_hat is None else repr(r.mu_hat),
                    repr(r.y_t0),
                    repr(r.j_hat),
                    repr(r.j_hat_se),
                    repr(r.j_star),
                    repr(r.abs_dev),
                    int(r.excluded),
                ]
            )


# ---------------------------------------------------------------------------
# Figure reproductions
# ---------------------------------------------------------------------------


def reproduce_fig1(
    seed: int,
    out_dir,
    n_reps: int = 30,
    t0_values: tuple[float, ...] = (5.0, 10.0),
    est_dt: float = 1e-3,
) -> dict:
    """Scatter of the stopped drift estimates across replications.

    One marker class per observation-window length; emits ``fig1.csv``
    (t0, replication, alpha_hat, tau_h, hit) and ``fig1.png``.
    """
    started = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    series = []
    for t0 in t0_values:
        params = demo_params(t0=t0)
        summary = replicate_estimation(
            params, n_reps=n_reps, seed=rng.mix64(seed, int(round(100 * t0))),
            dt=est_dt, estimate_mu=False,
        )
        series.append((t0, summary))

    csv_path = os.path.join(out_dir, "fig1.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t0", "replication", "alpha_hat", "tau_h", "hit"])
        for t0, summary in series:
            for i in range(summary.n_reps):
                writer.writerow(
                    [
                        repr(float(t0)),
                        i,
                        repr(float(summary.alpha_hat[i])),
                        repr(float(summary.tau_h[i])),
                        int(summary.hit[i]),
                    ]
                )

    png_path = os.path.join(out_dir, "fig1.png")
    _plot_fig1(series, png_path)

    params0 = demo_params(t0=t0_values[0])
    manifest = write_manifest(
        out_dir,
        "fig1",
        params_to_mapping(params0),
        {"seed": seed},
        {"n_reps": n_reps, "t0_values": list(t0_values), "est_dt": est_dt},
        [csv_path, png_path],
        time.monotonic() - started,
    )
    return {"csv": csv_path, "png": png_path, "manifest": manifest, "series": series}


def _plot_fig1(series, png_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    markers = {0: "x", 1: "*"}
    for idx, (t0, summary) in enumerate(series):
        ax.scatter(
            np.arange(summary.n_reps),
            summary.alpha_hat,
            marker=markers.get(idx, "o"),
            label=f"window {t0:g}",
        )
    ax.axhline(demo_params().alpha, color="k", lw=0.8, ls="--")
    ax.set_xlabel("replication")
    ax.set_ylabel("drift estimate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)


def reproduce_fig2(
    seed: int,
    out_dir,
    alpha_hat: float = -0.5,
    n_t: int = 401,
    n_y: int = 201,
    stop_tol: float = 1e-10,
) -> dict:
    """Solved h(t, 0) against its re-solve under a pessimistic drift estimate.

    Both solves share one grid wide enough for the slower-reverting
    estimate; emits ``fig2.csv`` (t, h, h_hat) and an overlaid line plot.
    The seed only enters the manifest: the curves are deterministic.
    """
    started = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    params = demo_params()
    config = default_solver_config(
        params, alpha=alpha_hat, n_t=n_t, n_y=n_y,
        cover=(params.alpha,), stop_tol=stop_tol,
    )
    sol_true = fixed_point_solve(params, config)
    sol_hat = fixed_point_solve(params, config, alpha=alpha_hat)

    t_nodes = sol_true.t_nodes
    h_curve = np.array([sol_true.interpolate(t, 0.0) for t in t_nodes])
    h_hat_curve = np.array([sol_hat.interpolate(t, 0.0) for t in t_nodes])

    csv_path = os.path.join(out_dir, "fig2.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "h", "h_hat"])
        for t, h, hh in zip(t_nodes, h_curve, h_hat_curve):
            writer.writerow([repr(float(t)), repr(float(h)), repr(float(hh))])

    png_path = os.path.join(out_dir, "fig2.png")
    _plot_fig2(t_nodes, h_curve, h_hat_curve, png_path)

    manifest = write_manifest(
        out_dir,
        "fig2",
        params_to_mapping(params),
        {"seed": seed},
        {"alpha_hat": alpha_hat, "n_t": n_t, "n_y": n_y, "stop_tol": stop_tol},
        [csv_path, png_path],
        time.monotonic() - started,
    )
    return {
        "csv": csv_path,
        "png": png_path,
        "manifest": manifest,
        "solution": sol_true,
        "solution_hat": sol_hat,
        "h_curve": h_curve,
        "h_hat_curve": h_hat_curve,
    }


def _plot_fig2(t_nodes, h_curve, h_hat_curve, png_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t_nodes, h_curve, label="h(t, 0)")
    ax.plot(t_nodes, h_hat_curve, "--", label="h(t, 0), estimated drift")
    ax.set_xlabel("t")
    ax.set_ylabel("h")
    ax.legend()
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
