import math

import numpy as np
import pytest

from ouportfolio import rng
from ouportfolio.simulate import (
    TimeGrid,
    dump_paths,
    ito_integral_y_dy,
    ou_step,
    ou_transition,
    simulate_paths,
)

from .conftest import make_constant_params
from .oracles import ou_variance


# --- exact OU transition ----------------------------------------------------

def test_ou_step_zero_dt_limit():
    # continuity: tiny step moves the state only infinitesimally
    y = ou_step(1.0, 1e-12, -5.0, 1.0, z=3.0)
    assert y == pytest.approx(1.0, abs=1e-5)


def test_ou_step_long_horizon_mean_reversion():
    assert ou_step(17.3, 1e6, -5.0, 1.0, z=0.0) == pytest.approx(0.0, abs=1e-12)


def test_ou_step_rejects_bad_arguments():
    with pytest.raises(ValueError):
        ou_step(0.0, -0.1, -5.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ou_step(0.0, 0.1, 5.0, 1.0, 0.0)


def test_ou_step_variance_against_mc():
    # nu^2 = (1 - e^{-1})/10 for alpha=-5, beta=1, dt=0.1
    phi, nu = ou_transition(-5.0, 1.0, 0.1)
    expected = (1.0 - math.exp(-1.0)) / 10.0
    assert nu**2 == pytest.approx(expected, rel=1e-12)

    z = rng.stream(7, 0).standard_normal(1_000_000)
    samples = ou_step(0.0, 0.1, -5.0, 1.0, z)
    var = samples.var()
    se = expected * math.sqrt(2.0 / z.size)
    assert abs(var - expected) < 3.0 * se


# --- joint path simulation --------------------------------------------------

def test_martingale_drift_identity():
    # constant sigma and mu = r: E[S_T]/S_0 = e^{rT}
    params = make_constant_params(mu=0.01, mu_bounds=(0.01, 0.02))
    grid = TimeGrid(0.0, 1.0, 200)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=40_000, seed=11)
    mean = batch.s[:, -1].mean()
    se = batch.s[:, -1].std() / math.sqrt(batch.n_paths)
    assert abs(mean - math.exp(0.01)) < 3.0 * se


def test_deterministic_factor_when_beta_tiny():
    # beta -> 0: Y_t = y0 e^{alpha t} on every path
    params = make_constant_params(beta=1e-12, y0=2.0)
    grid = TimeGrid(0.0, 1.0, 50)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=5, seed=3)
    expected = 2.0 * np.exp(params.alpha * grid.times())
    assert np.allclose(batch.y, expected[None, :], atol=1e-9)


def test_factor_variance_matches_transition_law():
    params = make_constant_params()
    grid = TimeGrid(0.0, 5.0, 500)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=100_000, seed=5)
    target = ou_variance(params.alpha, params.beta, 5.0)
    var = batch.y[:, -1].var()
    se = target * math.sqrt(2.0 / batch.n_paths)
    assert abs(var - target) < 3.0 * se
    mean_se = math.sqrt(target / batch.n_paths)
    assert abs(batch.y[:, -1].mean()) < 3.0 * mean_se


def test_bit_identical_reruns_and_stream_independence():
    params = make_constant_params()
    grid = TimeGrid(0.0, 0.5, 100)
    a = simulate_paths(params, grid, s0=2.0, n_paths=8, seed=42)
    b = simulate_paths(params, grid, s0=2.0, n_paths=8, seed=42)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.s, b.s)
    assert np.array_equal(a.dw, b.dw) and np.array_equal(a.du, b.du)

    # path i is a pure function of (seed, stream_id): generating fewer paths
    # or starting at a different offset cannot change it
    c = simulate_paths(params, grid, s0=2.0, n_paths=3, seed=42, first_stream=5)
    assert np.array_equal(c.y, a.y[5:8])


def test_increment_variances_and_independence():
    params = make_constant_params()
    grid = TimeGrid(0.0, 1.0, 1000)
    batch = simulate_paths(params, grid, s0=1.0, n_paths=200, seed=9)
    dt = grid.dt
    for arr in (batch.dw, batch.du):
        assert abs(arr.var() - dt) < 10.0 * dt / math.sqrt(grid.n_steps)
    n = batch.dw.size
    corr = float(np.corrcoef(batch.dw.ravel(), batch.du.ravel())[0, 1])
    assert abs(corr) < 3.0 / math.sqrt(n)


def test_bundle_views_and_dump(tmp_path):
    params = make_constant_params()
    grid = TimeGrid(0.0, 0.2, 20)
    batch = simulate_paths(params, grid, s0=1.5, n_paths=3, seed=1)
    bundles = list(batch)
    assert len(bundles) == 3
    assert bundles[1].stream_id == 1
    assert np.shares_memory(bundles[1].y_path, batch.y)
    assert np.all(batch.s > 0.0)
    assert batch.y[0, 0] == params.y0 and batch.s[0, 0] == 1.5

    files = dump_paths(batch, tmp_path / "paths")
    assert len(files) == 3
    header = open(files[0]).readline().strip()
    assert header == "t,y,s"
    data = np.loadtxt(files[2], delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], bundles[2].y_path)


# --- integral of Y dY -------------------------------------------------------

def test_ito_identity_zero_path():
    grid = TimeGrid(0.0, 2.0, 10)
    val = ito_integral_y_dy(np.zeros(11), grid, beta=1.0)
    assert val == pytest.approx(-1.0)  # -beta^2 * tau / 2


def test_ito_identity_deterministic_chain_rule():
    grid = TimeGrid(0.0, 1.0, 100)
    y = 2.0 * np.exp(-5.0 * grid.times())
    val = ito_integral_y_dy(y, grid, beta=0.0)
    assert val == pytest.approx(0.5 * (y[-1] ** 2 - 4.0), rel=1e-12)


def test_ito_identity_vs_riemann_sum_refinement():
    # identity and left-point sum differ by the quadratic-variation error,
    # whose mean is O(dt)
    params = make_constant_params()
    tau = 1.0
    bound = 5.0 * abs(params.alpha) * params.beta**2 * tau
    for dt, n_paths in ((1e-3, 400), (1e-4, 400)):
        grid = TimeGrid(0.0, tau, int(tau / dt))
        batch = simulate_paths(params, grid, s0=1.0, n_paths=n_paths, seed=13)
        disc = []
        for b in batch:
            ident = ito_integral_y_dy(b.y_path, grid, params.beta)
            riemann = float(np.sum(b.y_path[:-1] * np.diff(b.y_path)))
            disc.append(ident - riemann)
        disc = np.array(disc)
        se = disc.std() / math.sqrt(n_paths)
        assert abs(disc.mean()) < bound * dt + 3.0 * se


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 1.0, 10)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        simulate_paths(make_constant_params(), TimeGrid(0.0, 1.0, 10), s0=-1.0, n_paths=1, seed=0)
    with pytest.raises(ValueError):
        simulate_paths(make_constant_params(), TimeGrid(0.0, 1.0, 10), s0=1.0, n_paths=0, seed=0)
