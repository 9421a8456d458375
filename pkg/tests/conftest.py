"""Shared fixtures.

Three model configurations recur across the suite:

* the reference configuration shipped by ``presets`` (slow mean reversion
  horizon T = 10, 909-node grid) -- solved once per session and shared by the
  Monte Carlo and acceptance tests;
* a "fast" configuration (T = 1, alpha_cap = 30, q_bar = 2) whose solve takes
  well under a second, used wherever a realistic but cheap policy is needed;
* a three-alpha-node, single-step "toy" sized so that exhaustive policy
  enumeration is feasible.
"""

import warnings

import pytest

import mmqvi
from mmqvi import GridSpec, ModelParams, ParameterWarning


def quiet_params(**kwargs) -> ModelParams:
    """Construct ModelParams with zero-valued-field warnings suppressed."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterWarning)
        return ModelParams(**kwargs)


@pytest.fixture(scope="session")
def params6() -> ModelParams:
    return mmqvi.default_params()


@pytest.fixture(scope="session")
def spec6() -> GridSpec:
    return mmqvi.default_grid_spec()


@pytest.fixture(scope="session")
def grid6(params6, spec6):
    return mmqvi.build_grid(params6, spec6)


@pytest.fixture(scope="session")
def stencils6(grid6, params6):
    return mmqvi.build_stencils(grid6, params6, "clamp")


@pytest.fixture(scope="session")
def sol6(params6, spec6):
    return mmqvi.solve_backward(params6, spec6)


@pytest.fixture(scope="session")
def fast_params() -> ModelParams:
    return quiet_params(
        T=1.0,
        sigma=0.01,
        theta=0.1,
        delta=0.005,
        eps=0.005,
        lambda_a=1.0,
        lambda_b=1.0,
        k=20.0,
        rho=1.0,
        gamma_a=6.0,
        gamma_b=6.0,
        phi=1e-6,
        psi=0.0,
        q_bar=2,
        alpha_cap=30.0,
    )


@pytest.fixture(scope="session")
def fast_spec() -> GridSpec:
    return GridSpec(n_time_steps=50, n_alpha_points=31, alpha_cap=30.0, q_bar=2)


@pytest.fixture(scope="session")
def fast_sol(fast_params, fast_spec):
    return mmqvi.solve_backward(fast_params, fast_spec)


@pytest.fixture(scope="session")
def toy_params() -> ModelParams:
    return ModelParams(
        T=0.1,
        sigma=1.0,
        theta=0.1,
        delta=0.005,
        eps=0.005,
        lambda_a=1.0,
        lambda_b=1.0,
        k=1.0,
        rho=1.0,
        gamma_a=0.5,
        gamma_b=0.5,
        phi=0.1,
        psi=0.05,
        q_bar=1,
        alpha_cap=1.0,
    )


@pytest.fixture(scope="session")
def toy_spec() -> GridSpec:
    return GridSpec(n_time_steps=1, n_alpha_points=3, alpha_cap=1.0, q_bar=1)


@pytest.fixture(scope="session")
def toy_grid(toy_params, toy_spec):
    return mmqvi.build_grid(toy_params, toy_spec)


@pytest.fixture(scope="session")
def toy_stencils(toy_grid, toy_params):
    return mmqvi.build_stencils(toy_grid, toy_params, "clamp")


@pytest.fixture()
def no_profit_params() -> ModelParams:
    """A model with essentially no reward anywhere: spreads and signal are
    negligible, so the value function must vanish and impulses never pay."""
    tiny = 1e-30
    return quiet_params(
        T=1.0,
        sigma=tiny,
        theta=0.1,
        delta=0.0,
        eps=tiny,
        lambda_a=1.0,
        lambda_b=1.0,
        k=1.0,
        rho=tiny,
        gamma_a=0.5,
        gamma_b=0.5,
        phi=0.0,
        psi=0.0,
        q_bar=1,
        alpha_cap=1.0,
    )
