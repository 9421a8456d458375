"""Reference parameter set and grid used throughout the docs and tests."""

from __future__ import annotations

import warnings

from .grid import GridSpec
from .model import ModelParams, ParameterWarning


def default_params() -> ModelParams:
    # psi = 0 is part of the reference set; no point warning about it here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterWarning)
        return _reference_params()


def _reference_params() -> ModelParams:
    return ModelParams(
        T=10.0,
        sigma=0.01,
        theta=0.1,
        delta=0.005,
        eps=0.005,
        lambda_a=1.0,
        lambda_b=1.0,
        k=200.0,
        rho=1.0,
        gamma_a=60.0,
        gamma_b=60.0,
        phi=1e-6,
        psi=0.0,
        q_bar=4,
        alpha_cap=300.0,
    )


def default_grid_spec() -> GridSpec:
    return GridSpec(n_time_steps=200, n_alpha_points=101, alpha_cap=300.0, q_bar=4)
