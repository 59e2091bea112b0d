import numpy as np
import pytest

from ouportfolio.experiments import demo_params
from ouportfolio.hjb import default_solver_config, fixed_point_solve
from ouportfolio.model import ModelParams, VolatilitySpec


def make_constant_params(level: float = 0.5, **overrides) -> ModelParams:
    fields = dict(
        r=0.01,
        mu=0.02,
        mu_bounds=(0.01, 0.02),
        alpha=-5.0,
        alpha_bounds=(-10.0, -0.15),
        beta=1.0,
        y0=0.0,
        gamma=0.75,
        t0=5.0,
        horizon=6.0,
        vol=VolatilitySpec.constant(level),
    )
    fields.update(overrides)
    return ModelParams(**fields)


@pytest.fixture(scope="session")
def const_params() -> ModelParams:
    return make_constant_params()


@pytest.fixture(scope="session")
def fig2_params() -> ModelParams:
    return demo_params()


@pytest.fixture(scope="session")
def const_solution(const_params):
    config = default_solver_config(const_params, n_t=201, n_y=61, stop_tol=1e-11)
    return fixed_point_solve(const_params, config)


@pytest.fixture(scope="session")
def fig2_solution(fig2_params):
    config = default_solver_config(fig2_params, n_t=201, n_y=161, stop_tol=1e-10)
    return fixed_point_solve(fig2_params, config)


@pytest.fixture()
def rng_np():
    return np.random.default_rng(20240817)
