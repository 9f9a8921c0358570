"""Tests for the built-in example kernels."""

import math

import numpy as np
import pytest

from src import builtin_kernels
from src.builtin_kernels import (
    ConzeRaugiOperator,
    build_reflected_walk,
    conze_raugi_residual,
    constant_u,
    sine_u,
)
from src.errors import NotAKernel


def test_constant_u_is_eigenfunction():
    result = conze_raugi_residual(constant_u(), 0.4)
    assert result.residual <= 1e-10
    assert result.residual <= result.tail_bound + 1e-10
    assert result.tail_bound == pytest.approx(2 * 0.4**48 / 0.6)
    assert result.partition_defect == 0.0


def test_complex_lambda():
    result = conze_raugi_residual(constant_u(), 0.3 + 0.4j, n_terms=64)
    assert result.residual <= 1e-10


def test_lambda_zero():
    result = conze_raugi_residual(constant_u(), 0.0)
    assert result.residual < 1e-12
    assert result.tail_bound == 0.0


def test_sine_u_breaks_eigenrelation():
    """P f - λ f = a sin(2πx) for u = 1/2 + a sin(2πx)."""
    result = conze_raugi_residual(sine_u(0.1), 0.4)
    assert result.residual == pytest.approx(0.1, rel=1e-9)
    assert result.residual > result.tail_bound


@pytest.mark.parametrize("lam", [1.0, -1.0, 1.5, 0.8 + 0.8j])
def test_lambda_outside_disc(lam):
    with pytest.raises(ValueError, match="must be < 1"):
        conze_raugi_residual(constant_u(), lam)


def test_partition_checked():
    grid = np.arange(64) / 64
    with pytest.raises(NotAKernel, match="!= 1"):
        ConzeRaugiOperator(constant_u(0.6)).check_partition(grid)
    with pytest.raises(NotAKernel, match="nonnegative"):
        ConzeRaugiOperator(sine_u(0.8)).check_partition(grid)
    assert ConzeRaugiOperator(sine_u(0.5)).check_partition(grid) <= 1e-12


def test_eigenfunction_values():
    f = builtin_kernels.eigenfunction(0.5, 3)
    x = np.array([0.0, 0.25])
    # cos 2πx + 0.5 cos 4πx + 0.25 cos 8πx
    np.testing.assert_allclose(f(x).real, [1.75, -0.5 + 0.25], atol=1e-15)
    with pytest.raises(ValueError):
        builtin_kernels.eigenfunction(0.5, 0)


def test_walk_model():
    walk = build_reflected_walk(0.3)
    assert walk.kernel.space.size == 300
    assert walk.z == pytest.approx(math.sqrt(0.7 / 0.3))
    assert walk.bound == pytest.approx(2 * math.sqrt(0.21))
    assert walk.kernel.tails[-1] == pytest.approx(0.3)
    assert walk.phi(1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="beyond"):
        walk.phi(1.2)


@pytest.mark.parametrize("p", [0.0, 0.5, 0.7, -0.1])
def test_walk_needs_downward_drift(p):
    with pytest.raises(ValueError, match="0 < p < 1/2"):
        build_reflected_walk(p, 10)


def test_cycle():
    P = builtin_kernels.cycle(4)
    dense = P.to_dense().real
    assert dense[3, 0] == 1.0
    assert dense[0, 1] == 1.0
    with pytest.raises(ValueError):
        builtin_kernels.cycle(0)


def test_random_chain_floor():
    P = builtin_kernels.random_chain(6, seed=3, floor=0.3)
    dense = P.to_dense().real
    assert P.markov
    assert dense.min() >= 0.3 / 6 - 1e-12
    np.testing.assert_allclose(dense, builtin_kernels.random_chain(6, seed=3, floor=0.3).to_dense())


def test_rank_one_and_substochastic():
    nu = builtin_kernels.two_state(0.5, 0.5).row(0)
    P = builtin_kernels.rank_one(nu)
    np.testing.assert_allclose(P.to_dense().real, [[0.5, 0.5], [0.5, 0.5]])

    Q = builtin_kernels.substochastic(5, seed=1, mass=0.6)
    np.testing.assert_allclose(Q.row_mass(), 0.6)
    assert not Q.markov


def test_grid_kernel_is_circulant():
    P = builtin_kernels.grid_kernel(8, [1, 1, 0, 0, 0, 0, 0, 0])
    dense = P.to_dense().real
    np.testing.assert_allclose(dense[0], [0.5, 0.5, 0, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(dense[7], [0.5, 0, 0, 0, 0, 0, 0, 0.5])
    with pytest.raises(ValueError):
        builtin_kernels.grid_kernel(4, [1, -1, 0, 0])
