"""Shared fixtures: built-in problems, reference constants, toy models."""

from __future__ import annotations

import numpy as np
import pytest

from tamedsde import SdeProblem, StabilityParams, builtin_problem

# Everything deterministic hangs off this seed.
SEED = 20260816


@pytest.fixture
def unstable():
    return builtin_problem("ginzburg-landau-unstable")


@pytest.fixture
def stable():
    return builtin_problem("ginzburg-landau-stable")


@pytest.fixture
def unstable_long():
    # Same dynamics, doubled horizon: 8 steps at h = 1/4, enough for the
    # untamed quintic cascade to overflow float64 (4 steps cannot).
    return builtin_problem("ginzburg-landau-unstable", horizon=2.0)


@pytest.fixture
def stable_params():
    return StabilityParams(
        rho=2.0,
        theta=float(np.sqrt(2.0)),
        lip_K=2.0,
        beta=2.0,
        v=1.0,
        v_bar=1.0,
        alpha=5.0,
        m=1,
    )


def make_gbm(a: float = 1.5, b: float = 1.0) -> SdeProblem:
    """Linear test equation dX = a X dt + b X dW with empty one-sided part."""
    b_sq = b * b
    return SdeProblem(
        dim_state=1,
        dim_noise=1,
        phi=lambda x: a * x,
        varphi=lambda x: 0.0 * x,
        diffusion_column=lambda x, j: b * x,
        diffusion_derivative_product=lambda x, j1, j2: b_sq * x,
        initial_value=np.array([1.0]),
        horizon=1.0,
        label="gbm",
    )


@pytest.fixture
def gbm():
    return make_gbm()


def make_diagonal_2d(sigma=(0.5, 1.5)) -> SdeProblem:
    """Two independent noises acting on their own coordinates (commutative)."""

    def diffusion(x, j):
        out = np.zeros_like(x)
        out[..., j] = sigma[j] * x[..., j]
        return out

    return SdeProblem(
        dim_state=2,
        dim_noise=2,
        phi=lambda x: -x,
        varphi=lambda x: -(x**3),
        diffusion_column=diffusion,
        initial_value=np.array([1.0, 0.5]),
        horizon=1.0,
        label="diagonal-2d",
    )


def make_swapped_2d() -> SdeProblem:
    """g_0 = (x_2, 0), g_1 = (0, x_1): the classic non-commutative pair."""

    def diffusion(x, j):
        out = np.zeros_like(x)
        if j == 0:
            out[..., 0] = x[..., 1]
        else:
            out[..., 1] = x[..., 0]
        return out

    return SdeProblem(
        dim_state=2,
        dim_noise=2,
        phi=lambda x: -x,
        varphi=lambda x: 0.0 * x,
        diffusion_column=diffusion,
        initial_value=np.array([1.0, 2.0]),
        horizon=1.0,
        label="swapped-2d",
    )


@pytest.fixture
def diagonal_2d():
    return make_diagonal_2d()


@pytest.fixture
def swapped_2d():
    return make_swapped_2d()
