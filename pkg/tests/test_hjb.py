import logging
import math

import numpy as np
import pytest

from ouportfolio.hjb import (
    ConvergenceError,
    apply_operator_mc,
    apply_operator_pde,
    default_solver_config,
    fixed_point_solve,
    load_solution,
    operator_residual,
    r_star_bound,
    rho_star_distance,
    save_solution,
    supergeometric_bound,
    zeta_star,
)
from ouportfolio.model import q_function

from .oracles import (
    constant_potential_operator,
    constant_sigma_h,
    golden_section_min,
    linear_source_u,
)


# --- weighted metric --------------------------------------------------------

def test_rho_star_identity_and_offset():
    t_nodes = np.linspace(5.0, 6.0, 11)
    f = np.ones((11, 7))
    assert rho_star_distance(f, f, 2.0, t_nodes) == 0.0
    # constant offset: weight is 1 at t = T, so the sup equals the offset
    assert rho_star_distance(f + 0.3, f, 2.0, t_nodes) == pytest.approx(0.3)


def test_rho_star_weight_cancellation():
    t_nodes = np.linspace(5.0, 6.0, 21)
    kappa = 3.7
    f = np.exp(kappa * (t_nodes[-1] - t_nodes))[:, None] * np.ones((21, 5))
    assert rho_star_distance(f, np.zeros_like(f), kappa, t_nodes) == pytest.approx(1.0)


def test_rho_star_shape_mismatch():
    t_nodes = np.linspace(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        rho_star_distance(np.ones((4, 3)), np.ones((4, 4)), 1.0, t_nodes)


# --- one operator application (Crank-Nicolson) ------------------------------

def test_operator_matches_scalar_ode(const_params):
    config = default_solver_config(const_params, n_t=401, n_y=41)
    f = np.ones((config.n_t, config.n_y))
    u = apply_operator_pde(f, const_params, config)
    q_val = float(q_function(const_params, 0.0))
    t_nodes = np.linspace(const_params.t0, const_params.horizon, config.n_t)
    expected = np.array(
        [linear_source_u(const_params.horizon - t, q_val, 1.0 / const_params.q_star)
         for t in t_nodes]
    )
    assert np.max(np.abs(u - expected[:, None])) < 1e-6


def test_operator_terminal_row_is_one(fig2_params):
    config = default_solver_config(fig2_params, n_t=51, n_y=41)
    u = apply_operator_pde(np.ones((51, 41)), fig2_params, config)
    assert np.array_equal(u[-1], np.ones(41))


def test_operator_huge_f_kills_source(const_params):
    # f**(1-q*) -> 0: u reduces to the potential-only growth factor
    config = default_solver_config(const_params, n_t=201, n_y=31)
    u = apply_operator_pde(np.full((201, 31), 1e12), const_params, config)
    q_val = float(q_function(const_params, 0.0))
    expected = math.exp(q_val * const_params.t_tail)
    assert u[0, 15] == pytest.approx(expected, abs=1e-9)


def test_operator_rejects_f_below_one(const_params):
    config = default_solver_config(const_params, n_t=11, n_y=11)
    bad = np.ones((11, 11))
    bad[3, 4] = 0.5
    with pytest.raises(ValueError):
        apply_operator_pde(bad, const_params, config)
    with pytest.raises(ValueError):
        apply_operator_pde(np.ones((10, 11)), const_params, config)


# --- Monte Carlo route ------------------------------------------------------

def test_mc_operator_degenerate_horizon(const_params):
    val, se = apply_operator_mc(lambda t, y: np.ones_like(y), const_params.horizon, 0.3,
                                const_params, n_paths=200, seed=1)
    assert val == 1.0 and se == 0.0


def test_mc_operator_constant_potential(const_params):
    # sigma constant makes Q constant; f = 1 gives a closed form
    q_val = float(q_function(const_params, 0.0))
    expected = constant_potential_operator(const_params.t_tail, q_val, const_params.q_star)
    val, se = apply_operator_mc(
        lambda t, y: np.ones_like(y), const_params.t0, 0.0, const_params,
        n_paths=20_000, seed=3,
    )
    assert abs(val - expected) < 3.0 * se + 1e-4


def test_mc_operator_rejects_tiny_sample(const_params):
    with pytest.raises(ValueError):
        apply_operator_mc(lambda t, y: np.ones_like(y), const_params.t0, 0.0,
                          const_params, n_paths=50, seed=1)


def test_mc_matches_pde_at_fixed_point(fig2_params, fig2_solution):
    rng = np.random.default_rng(7)
    for _ in range(5):
        t = float(rng.uniform(fig2_params.t0, fig2_params.horizon))
        y = float(rng.uniform(-1.5, 1.5))
        val, se = apply_operator_mc(fig2_solution.interpolate, t, y, fig2_params,
                                    n_paths=20_000, seed=int(rng.integers(1 << 30)))
        assert abs(val - fig2_solution.interpolate(t, y)) < 3.0 * se + 5e-3


# --- fixed-point iteration --------------------------------------------------

def test_constant_sigma_closed_form(const_params, const_solution):
    q_val = float(q_function(const_params, 0.0))
    for t in np.linspace(const_params.t0, const_params.horizon, 9):
        expected = constant_sigma_h(const_params.horizon - t, q_val, const_params.q_star)
        assert const_solution.interpolate(t, 0.7) == pytest.approx(expected, abs=1e-6)


def test_h_decreasing_in_time_at_origin(fig2_solution):
    curve = np.array([fig2_solution.interpolate(t, 0.0) for t in fig2_solution.t_nodes])
    assert np.all(np.diff(curve) <= 1e-12)
    assert curve[-1] == pytest.approx(1.0)


def test_sandwich_all_iterates(fig2_solution):
    r_star = fig2_solution.r_star
    for it in fig2_solution.iterates:
        assert np.all(it >= 1.0)
        assert np.all(it <= r_star + 1e-12)


def test_contraction_ratios(fig2_solution):
    lam = 1.0 / (fig2_solution.zeta + 1.0)
    rho = fig2_solution.rho_star_history
    for n in range(1, len(rho)):
        assert rho[n] <= (lam + 0.05) * rho[n - 1]


def test_certificates_dominate_deviations(fig2_solution):
    tol = 10.0 * fig2_solution.config.stop_tol
    for dev, cert in zip(fig2_solution.sup_deviations, fig2_solution.certificates):
        assert dev <= cert + tol


def test_fixed_point_residual(fig2_params, fig2_solution):
    assert operator_residual(fig2_solution, fig2_params) <= 2.0 * fig2_solution.config.stop_tol


def test_explicit_zeta_is_honored(const_params):
    config = default_solver_config(const_params, n_t=51, n_y=11, zeta=2.5, stop_tol=1e-9)
    sol = fixed_point_solve(const_params, config)
    assert sol.zeta == 2.5
    assert sol.kappa == pytest.approx(sol.q_bounds.q_star_sup + 3.5)


def test_non_convergence_reported(const_params):
    config = default_solver_config(const_params, n_t=51, n_y=11, max_iter=2, stop_tol=1e-16)
    with pytest.raises(ConvergenceError) as err:
        fixed_point_solve(const_params, config)
    assert err.value.residual > 1e-16
    assert len(err.value.history) == 2


# --- optimized contraction parameter ----------------------------------------

def test_zeta_star_closed_cases():
    assert zeta_star(1, 1.0) == 1.0
    # discriminant collapse at n = t_tail: minimizer is 1/sqrt(t_tail)
    assert zeta_star(4, 4.0) == pytest.approx(0.5, rel=1e-14)
    assert zeta_star(2, 2.0) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-14)
    assert zeta_star(10, 1.0) == pytest.approx((math.sqrt(85.0) + 9.0) / 2.0, rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 10, 37])
def test_zeta_star_matches_direct_minimization(n):
    t_tail = 1.0

    def g(x):
        return x * t_tail - math.log(x) - (n - 1) * math.log1p(x)

    def dg(x):
        return t_tail - 1.0 / x - (n - 1) / (1.0 + x)

    direct = golden_section_min(g, 1e-6, 1e3, tol=1e-10, dfn=dg)
    assert zeta_star(n, t_tail) == pytest.approx(direct, abs=1e-8)


def test_supergeometric_fixed_zeta_is_geometric(const_params):
    zeta = 1.7
    lam = 1.0 / (zeta + 1.0)
    b1 = supergeometric_bound(3, zeta, const_params)
    b2 = supergeometric_bound(4, zeta, const_params)
    assert b2 / b1 == pytest.approx(lam, rel=1e-12)


def test_supergeometric_formula_recomputation(const_params):
    # n=1, zeta=1: recompute from the three defining pieces independently
    q_sup = float(q_function(const_params, 0.0))
    t_tail = const_params.t_tail
    kappa = q_sup + 1.0 + 1.0
    lam = 0.5
    r_star = r_star_bound(q_sup, t_tail)
    expected = math.exp(kappa * t_tail) * (1.0 + r_star) / (1.0 - lam) * lam
    assert supergeometric_bound(1, 1.0, const_params) == pytest.approx(expected, rel=1e-12)
    assert r_star == pytest.approx(2.0 * math.exp(q_sup), rel=1e-12)


def test_supergeometric_beats_any_geometric(const_params):
    t_tail = const_params.t_tail
    vals = [
        supergeometric_bound(n, zeta_star(n, t_tail), const_params) * n ** (0.5 * n)
        for n in range(1, 61)
    ]
    assert vals[59] < 1e-20
    tail = vals[9:]
    assert all(b < a for a, b in zip(tail, tail[1:]))


def test_optimized_bound_equals_exponential_form(const_params):
    # B * lambda^n at zeta*(n) == C * exp(g_n(zeta*(n)))
    q_sup = float(q_function(const_params, 0.0))
    t_tail = const_params.t_tail
    c_star = (1.0 + r_star_bound(q_sup, t_tail)) * math.exp((q_sup + 1.0) * t_tail)
    for n in (1, 3, 12):
        x = zeta_star(n, t_tail)
        g_val = x * t_tail - math.log(x) - (n - 1) * math.log1p(x)
        assert supergeometric_bound(n, x, const_params) == pytest.approx(
            c_star * math.exp(g_val), rel=1e-12
        )


# --- interpolation ----------------------------------------------------------

def test_interpolate_grid_nodes_exact(fig2_solution):
    i, j = 7, 23
    t = float(fig2_solution.t_nodes[i])
    y = float(fig2_solution.y_nodes[j])
    assert fig2_solution.interpolate(t, y) == fig2_solution.h_grid[i, j]


def test_interpolate_terminal_row(fig2_solution):
    assert fig2_solution.interpolate(fig2_solution.horizon, 0.33) == pytest.approx(1.0)


def test_interpolate_bilinear_midpoint(fig2_solution):
    t0, t1 = fig2_solution.t_nodes[3], fig2_solution.t_nodes[4]
    y0, y1 = fig2_solution.y_nodes[10], fig2_solution.y_nodes[11]
    corners = fig2_solution.h_grid[3:5, 10:12]
    mid = fig2_solution.interpolate(0.5 * (t0 + t1), 0.5 * (y0 + y1))
    assert mid == pytest.approx(float(corners.mean()), rel=1e-12)


def test_interpolate_time_domain_enforced(fig2_solution):
    with pytest.raises(ValueError):
        fig2_solution.interpolate(fig2_solution.horizon + 0.5, 0.0)


def test_interpolate_constant_extrapolation_warns(fig2_solution, caplog):
    edge = fig2_solution.interpolate(fig2_solution.t0, fig2_solution.y_nodes[-1])
    with caplog.at_level(logging.WARNING, logger="ouportfolio.hjb"):
        far = fig2_solution.interpolate(fig2_solution.t0, fig2_solution.y_nodes[-1] + 50.0)
    assert far == edge
    assert 1.0 <= far <= fig2_solution.r_star


# --- serialization ----------------------------------------------------------

def test_solution_roundtrip_bit_exact(tmp_path, fig2_solution):
    save_solution(fig2_solution, tmp_path, stem="sol")
    loaded = load_solution(tmp_path, stem="sol")
    rng = np.random.default_rng(0)
    for _ in range(25):
        t = float(rng.uniform(fig2_solution.t0, fig2_solution.horizon))
        y = float(rng.uniform(-8.0, 8.0))
        assert loaded.interpolate(t, y) == fig2_solution.interpolate(t, y)
    assert loaded.rho_star_history == fig2_solution.rho_star_history
    assert loaded.certificates == fig2_solution.certificates
    assert loaded.params_key == fig2_solution.params_key
