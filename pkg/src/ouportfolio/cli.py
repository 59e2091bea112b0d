"""Command-line surface binding config files to experiments.

Commands: solve, estimate, value, delta, fig1, fig2, endowment.  Every
command reads a flat key=value config, applies ``--set`` overrides, writes
its outputs plus a manifest under ``--out``, and exits 0 on success, 1 on
validation errors, 2 on solver non-convergence.  ``--seed`` fully
determines all stochastic outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import experiments
from .bounds import ledger, max_endowment, save_ledger
from .estimate import replicate_estimation
from .hjb import ConvergenceError, default_solver_config, fixed_point_solve, save_solution
from .model import ConfigError, load_params, params_to_mapping
from .strategy import OptimalStrategy

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NO_CONVERGENCE = 2

# Runtime knobs recognized in --set on top of the model parameter keys.
_RUN_KEYS = {
    "n_t", "n_y", "stop_tol", "zeta", "max_iter",
    "n_reps", "n_paths", "n_inner", "est_dt", "x0", "y0",
    "delta_target", "mode", "alpha_hat",
}


def _split_overrides(pairs: list[str]) -> tuple[dict, dict]:
    """Partition KEY=VALUE overrides into model keys and runtime keys."""
    from .model import PARAM_KEYS

    model_over: dict[str, str] = {}
    run_over: dict[str, str] = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        key, val = key.strip(), val.strip()
        if key in PARAM_KEYS:
            model_over[key] = val
        elif key in _RUN_KEYS:
            run_over[key] = val
        else:
            raise ConfigError(f"unknown override key: {key!r}")
    return model_over, run_over


def _run_float(run: dict, key: str, default: float) -> float:
    try:
        return float(run.get(key, default))
    except ValueError:
        raise ConfigError(f"override {key!r} is not a number: {run[key]!r}") from None


def _run_int(run: dict, key: str, default: int) -> int:
    try:
        return int(run.get(key, default))
    except ValueError:
        raise ConfigError(f"override {key!r} is not an integer: {run[key]!r}") from None


def _solver_config(params, run: dict, alpha=None, cover=()):
    kwargs = {}
    if "stop_tol" in run:
        kwargs["stop_tol"] = _run_float(run, "stop_tol", 1e-8)
    if "zeta" in run:
        kwargs["zeta"] = _run_float(run, "zeta", 1.0)
    if "max_iter" in run:
        kwargs["max_iter"] = _run_int(run, "max_iter", 64)
    return default_solver_config(
        params,
        alpha=alpha,
        n_t=_run_int(run, "n_t", 401),
        n_y=_run_int(run, "n_y", 201),
        cover=cover,
        **kwargs,
    )


def _cmd_solve(params, run, out_dir, seed, threads):
    config = _solver_config(params, run)
    solution = fixed_point_solve(params, config)
    paths = save_solution(solution, out_dir, stem="solution")
    led = ledger(params, solution)
    ledger_path = os.path.join(out_dir, "constants.json")
    save_ledger(led, ledger_path)
    print(
        f"solved: {solution.n_iterations} iterations, residual "
        f"{solution.residual:.3e}, h(t0,y0) = {solution.interpolate(params.t0, params.y0):.6f}"
    )
    return [paths["json"], paths["csv"], ledger_path]


def _cmd_estimate(params, run, out_dir, seed, threads):
    n_reps = _run_int(run, "n_reps", 1000)
    summary = replicate_estimation(
        params, n_reps=n_reps, seed=seed, dt=_run_float(run, "est_dt", 1e-3)
    )
    out = {
        "n_reps": n_reps,
        "mean_abs_alpha_err": summary.mean_abs_alpha_err,
        "mean_abs_mu_err": summary.mean_abs_mu_err,
        "hit_rate": summary.hit_rate,
        "threshold": summary.threshold,
        "epsilon_t0": summary.epsilon_t0,
        "epsilon1_t0": summary.epsilon1_t0,
        "alpha_err_quantiles": summary.alpha_err_quantiles,
        "note": "initial factor level defaults to y0 from the config",
    }
    path = os.path.join(out_dir, "estimation_summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"estimation: mean |alpha error| {summary.mean_abs_alpha_err:.4f} "
        f"(bound {summary.epsilon_t0:.4g}), hit rate {summary.hit_rate:.4f}"
    )
    return [path]


def _cmd_value(params, run, out_dir, seed, threads):
    config = _solver_config(params, run)
    solution = fixed_point_solve(params, config)
    x0 = _run_float(run, "x0", 1.0)
    y0 = _run_float(run, "y0", params.y0)
    n_paths = _run_int(run, "n_paths", 100_000)
    mean, se = experiments.mc_value(
        OptimalStrategy(solution), params, solution, x0, y0, n_paths, seed
    )
    path = os.path.join(out_dir, "value.csv")
    experiments.write_outcome_csv(
        path,
        [{
            "strategy": "optimal", "x0": x0, "y0": y0, "paths": n_paths,
            "objective_mean": mean, "objective_se": se,
        }],
    )
    closed = x0**params.gamma * solution.interpolate(params.t0, y0)
    print(f"value: MC {mean:.6f} +- {se:.2e}, closed form {closed:.6f}")
    return [path]


def _cmd_delta(params, run, out_dir, seed, threads):
    result = experiments.delta_pipeline(
        params,
        x0=_run_float(run, "x0", 1.0),
        n_reps=_run_int(run, "n_reps", 50),
        seed=seed,
        mode=run.get("mode", "known"),
        n_inner=_run_int(run, "n_inner", 10_000),
        est_dt=_run_float(run, "est_dt", 1e-3),
        threads=threads,
    )
    report = os.path.join(out_dir, "delta_report.csv")
    experiments.write_delta_report(report, result)
    table = os.path.join(out_dir, "delta_replications.csv")
    experiments.write_pipeline_table(table, result)
    bound = result.delta_bound if result.mode == "known" else result.delta2_bound
    print(
        f"delta pipeline ({result.mode}): mean |J_hat - J*| = "
        f"{result.mean_abs_dev:.6f} vs bound {bound:.4g}; "
        f"{result.n_excluded} replications excluded"
    )
    return [report, table]


def _cmd_fig1(params, run, out_dir, seed, threads):
    res = experiments.reproduce_fig1(
        seed, out_dir, n_reps=_run_int(run, "n_reps", 30)
    )
    print(f"wrote {res['csv']} and {res['png']}")
    return [res["csv"], res["png"], res["manifest"]]


def _cmd_fig2(params, run, out_dir, seed, threads):
    res = experiments.reproduce_fig2(
        seed,
        out_dir,
        alpha_hat=_run_float(run, "alpha_hat", -0.5),
        n_t=_run_int(run, "n_t", 401),
        n_y=_run_int(run, "n_y", 201),
    )
    print(f"wrote {res['csv']} and {res['png']}")
    return [res["csv"], res["png"], res["manifest"]]


def _cmd_endowment(params, run, out_dir, seed, threads):
    config = _solver_config(params, run)
    solution = fixed_point_solve(params, config)
    led = ledger(params, solution)
    target = _run_float(run, "delta_target", 0.01)
    mode = run.get("mode", "known")
    x = max_endowment(led, target, mode=mode)
    path = os.path.join(out_dir, "endowment.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"delta_target": target, "mode": mode, "max_endowment": x},
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    print(f"max endowment for suboptimality {target:g} ({mode} rate): x = {x:.6g}")
    return [path]


_COMMANDS = {
    "solve": _cmd_solve,
    "estimate": _cmd_estimate,
    "value": _cmd_value,
    "delta": _cmd_delta,
    "fig1": _cmd_fig1,
    "fig2": _cmd_fig2,
    "endowment": _cmd_endowment,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ouportfolio",
        description="Consumption-investment under an OU volatility factor",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="flat key=value parameter file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="64-bit master seed")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override a config or runtime key (repeatable)",
    )
    parser.add_argument("--threads", type=int, default=0, help="worker threads (0 = auto)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        model_over, run_over = _split_overrides(args.set)
        params = load_params(args.config, overrides=model_over)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    os.makedirs(args.out, exist_ok=True)
    started = time.monotonic()
    try:
        outputs = _COMMANDS[args.command](params, run_over, args.out, args.seed, args.threads)
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        print(f"residual history: {exc.history}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    from .experiments import write_manifest

    write_manifest(
        args.out,
        args.command,
        params_to_mapping(params),
        {"seed": args.seed},
        {"overrides": sorted(args.set), "threads": args.threads},
        outputs,
        time.monotonic() - started,
    )
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
