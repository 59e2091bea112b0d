import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ouportfolio.estimate import (
    epsilon1_bound,
    epsilon_bound,
    mu_estimate,
    replicate_estimation,
    sequential_alpha,
    sequential_constants,
    stopping_time,
)
from ouportfolio.model import VolatilitySpec
from ouportfolio.simulate import TimeGrid, simulate_paths

from .conftest import make_constant_params
from .oracles import drift_error_bound


def sin2_params(**overrides):
    return make_constant_params(vol=VolatilitySpec.sin_squared(0.5, 1.0), **overrides)


# --- stopping time ----------------------------------------------------------

def test_stopping_time_constant_path():
    grid = TimeGrid(0.0, 5.0, 5000)
    y = np.full(5001, 1.5)
    tau = stopping_time(y, grid, threshold=2.0)
    assert tau == pytest.approx(2.0 / 1.5**2, rel=1e-12)


def test_stopping_time_immediate_crossing():
    grid = TimeGrid(0.0, 1.0, 1000)
    y = np.full(1001, 2.0)
    tau = stopping_time(y, grid, threshold=1e-9)
    assert tau == pytest.approx(1e-9 / 4.0, rel=1e-9)


def test_stopping_time_not_reached():
    grid = TimeGrid(0.0, 1.0, 100)
    assert stopping_time(np.zeros(101), grid, threshold=0.1) is None


# --- sequential drift estimate ----------------------------------------------

def test_truncation_event_projects_to_upper_endpoint():
    params = sin2_params()
    grid = TimeGrid(0.0, params.t0, 500)
    report = sequential_alpha(np.full(501, 1e-9), grid, params)
    assert report.alpha_raw == 0.0
    assert report.tau_h is None
    assert report.alpha_hat == params.alpha_bounds[1]  # nearest endpoint to 0


def test_noiseless_identification():
    # deterministic path, threshold set to the realized energy: the ratio
    # recovers the drift exactly up to quadrature error
    params = make_constant_params(beta=1e-9, y0=2.0)
    grid = TimeGrid(0.0, params.t0, 5000)
    y = 2.0 * np.exp(params.alpha * grid.times())
    realized = float(np.trapezoid(y * y, dx=grid.dt))
    report = sequential_alpha(y, grid, params, threshold=realized * (1.0 - 1e-12))
    assert report.alpha_raw == pytest.approx(params.alpha, abs=1e-4)
    assert report.alpha_hat == pytest.approx(params.alpha, abs=1e-4)


def test_estimate_depends_only_on_path_up_to_crossing():
    params = sin2_params()
    grid = TimeGrid(0.0, params.t0, 5000)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=1, seed=77)
    y = batch.y[0].copy()
    first = sequential_alpha(y, grid, params)
    assert first.tau_h is not None
    cut = int(first.tau_h / grid.dt) + 2
    y[cut:] = 1e9  # garbage after the stop
    second = sequential_alpha(y, grid, params)
    assert second.alpha_hat == first.alpha_hat
    assert second.tau_h == first.tau_h


@given(st.floats(-20, 5), st.floats(-9, -1))
@settings(max_examples=60, deadline=None)
def test_projection_contracts_toward_interior_truth(raw, truth):
    lo, hi = -10.0, -0.15
    projected = float(np.clip(raw, lo, hi))
    assert abs(projected - truth) <= abs(raw - truth) + 1e-15


# --- error bound ------------------------------------------------------------

def test_epsilon_matches_independent_recomputation():
    params = sin2_params()
    oracle = drift_error_bound(1.0, -10.0, -0.15, 0.0, 5.0)
    consts = sequential_constants(params)
    assert consts["kappa1"] == pytest.approx(oracle["kappa1"], rel=1e-12)
    assert consts["kappa"] == pytest.approx(oracle["kappa"], rel=1e-12)
    assert consts["H"] == pytest.approx(oracle["H"], rel=1e-12)
    assert epsilon_bound(params) == pytest.approx(oracle["eps"], rel=1e-12)
    # order of magnitude sanity for the benchmark configuration
    assert 1.8e6 < epsilon_bound(params) < 2.1e6


def test_epsilon_decreasing_in_window():
    params = sin2_params()
    vals = [epsilon_bound(params, t0=t0) for t0 in np.linspace(2.0, 100.0, 50)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_epsilon_needs_window_above_one():
    params = sin2_params(t0=0.9, horizon=2.0)
    with pytest.raises(ValueError):
        epsilon_bound(params)


# --- appreciation-rate estimate ---------------------------------------------

def test_mu_estimate_noiseless_limit():
    params = make_constant_params(vol=VolatilitySpec.constant(1e-8))
    grid = TimeGrid(0.0, params.t0, 5000)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=1, seed=5)
    est = mu_estimate(batch.s[0], grid, params.t0)
    assert est == pytest.approx(params.mu, abs=5e-5)  # O(dt) bias only


def test_mu_estimate_antisymmetry():
    # replacing mu by 2r - mu flips the sign of E[mu_hat] - r
    up = sin2_params(mu=0.02, mu_bounds=(0.001, 0.05))
    down = up.with_estimates(mu=2.0 * up.r - up.mu)  # mirrored drift
    grid = TimeGrid(0.0, up.t0, 2000)
    n = 400
    devs_up = np.empty(n)
    devs_down = np.empty(n)
    batch_u = simulate_paths(up, grid, s0=1.0, n_paths=n, seed=9)
    batch_d = simulate_paths(down, grid, s0=1.0, n_paths=n, seed=9)
    for i in range(n):
        devs_up[i] = mu_estimate(batch_u.s[i], grid, up.t0) - up.r
        devs_down[i] = mu_estimate(batch_d.s[i], grid, up.t0) - up.r
    pair_se = (devs_up + devs_down).std() / math.sqrt(n)
    assert abs(devs_up.mean() + devs_down.mean()) < 3.0 * pair_se + 1e-4


def test_mu_error_within_bound():
    params = sin2_params()
    summary = replicate_estimation(params, n_reps=500, seed=12, dt=1e-3)
    assert summary.mean_abs_mu_err <= epsilon1_bound(params)
    assert epsilon1_bound(params) == pytest.approx(1.5 / math.sqrt(5.0), rel=1e-12)


# --- replication machinery ----------------------------------------------------

def test_replication_guards():
    with pytest.raises(ValueError):
        replicate_estimation(sin2_params(), n_reps=1, seed=0)


def test_replications_degenerate_without_noise():
    # the estimator is scale-free in beta (threshold and noise both carry
    # beta^2), so the no-noise limit needs a fixed threshold to show up
    params = make_constant_params(beta=1e-8, y0=2.0)
    summary = replicate_estimation(params, n_reps=8, seed=3, dt=1e-3,
                                   estimate_mu=False, threshold=0.2)
    assert np.allclose(summary.alpha_hat, summary.alpha_hat[0], rtol=0.0, atol=1e-5)
    assert summary.alpha_hat[0] == pytest.approx(params.alpha, abs=1e-3)


def test_replications_deterministic_and_chunk_invariant():
    params = sin2_params()
    a = replicate_estimation(params, n_reps=40, seed=6, dt=5e-3, chunk=7)
    b = replicate_estimation(params, n_reps=40, seed=6, dt=5e-3, chunk=512)
    assert np.array_equal(a.alpha_hat, b.alpha_hat)
    assert np.array_equal(a.mu_hat, b.mu_hat)


def test_benchmark_replication_statistics():
    params = sin2_params()
    summary = replicate_estimation(params, n_reps=1500, seed=8, dt=1e-3, estimate_mu=False)
    assert summary.hit_rate >= 0.99
    assert summary.mean_abs_alpha_err <= summary.epsilon_t0
    assert np.all(summary.alpha_hat >= params.alpha_bounds[0] - 1e-12)
    assert np.all(summary.alpha_hat <= params.alpha_bounds[1] + 1e-12)

    longer = replicate_estimation(sin2_params(t0=10.0, horizon=11.0), n_reps=1500, seed=8,
                                  dt=1e-3, estimate_mu=False)
    assert longer.mean_abs_alpha_err < summary.mean_abs_alpha_err


def test_scaled_error_is_standard_normal_given_stop():
    params = sin2_params()
    summary = replicate_estimation(params, n_reps=2500, seed=15, dt=1e-3, estimate_mu=False)
    h_thr = sequential_constants(params)["H"]
    scaled = np.sqrt(h_thr) * (summary.alpha_raw[summary.hit] - params.alpha) / params.beta
    ks = stats.kstest(scaled, "norm")
    assert ks.statistic < 1.628 / math.sqrt(scaled.size)
