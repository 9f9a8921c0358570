"""Tests for stationary laws, periods and geometric decay."""

import math

import numpy as np
import pytest

from src.builtin_kernels import cycle, random_chain, substochastic, swap, two_state, walk_kernel
from src.ergodic import ergodic_decay_check, period_detect, stationary
from src.errors import NotMarkov
from src.models import Kernel, StateSpace, WeightFn


def test_two_state_stationary():
    """π = (b, a)/(a + b)."""
    result = stationary(two_state(0.1, 0.2))
    np.testing.assert_allclose(result.pi.to_dense(), [2 / 3, 1 / 3], atol=1e-12)
    assert result.unique is True
    assert result.residual < 1e-12


def test_walk_stationary_detailed_balance():
    """Folding the tail back keeps π(x+1)/π(x) = p/q."""
    result = stationary(walk_kernel(0.3, 40))
    pi = result.pi.to_dense()
    np.testing.assert_allclose(pi[1:] / pi[:-1], 0.3 / 0.7, rtol=1e-8)
    assert pi.sum() == pytest.approx(1.0)


def test_stationary_random_chains():
    """πP = π on seeded chains."""
    for seed in range(5):
        P = random_chain(20, seed)
        pi = stationary(P).pi.to_dense()
        np.testing.assert_allclose(pi @ P.to_dense(), pi, atol=1e-12)


def test_reducible_chain_is_not_unique():
    """Two closed classes give eigenvalue 1 twice."""
    P = Kernel.identity(StateSpace.finite(2))
    result = stationary(P)
    assert result.unique is False
    assert result.pi.is_probability()


def test_stationary_needs_markov():
    """Substochastic kernels have no invariant probability."""
    with pytest.raises(NotMarkov):
        stationary(substochastic(4, seed=0, mass=0.9))


def test_period_detect():
    """Periods of the swap, cycles and aperiodic chains."""
    assert period_detect(swap()) == 2
    assert period_detect(cycle(3)) == 3
    assert period_detect(two_state(0.1, 0.2)) == 1
    assert period_detect(random_chain(10, seed=1)) == 1


def test_two_state_decay():
    """κ = |1 - a - b| + margin and the measured slope is log 0.7."""
    report = ergodic_decay_check(two_state(0.1, 0.2))
    assert report.d == 1
    assert report.kappa == pytest.approx(0.71)
    assert report.measured_slope == pytest.approx(math.log(0.7), abs=0.02)
    np.testing.assert_allclose(report.pi.to_dense(), [2 / 3, 1 / 3], atol=1e-12)
    np.testing.assert_allclose(report.cesaro_limit.to_dense(), [[2 / 3, 1 / 3], [2 / 3, 1 / 3]], atol=1e-10)
    for n, residual, envelope in report.decay_table:
        assert residual <= envelope * (1 + 1e-9) + 1e-12


def test_swap_peripheral_limit():
    """The swap has period 2, S = I and P^{2n} = S."""
    report = ergodic_decay_check(swap(), n_max=20)
    assert report.d == 2
    np.testing.assert_allclose(report.S_limit.to_dense(), np.eye(2), atol=1e-12)
    np.testing.assert_allclose(report.cesaro_limit.to_dense(), np.full((2, 2), 0.5), atol=1e-12)
    assert all(residual < 1e-12 for _, residual, _ in report.decay_table)


def test_weighted_decay_on_random_chain():
    """A nonconstant weight with its own test function stays inside the envelope."""
    P = random_chain(8, seed=3)
    w = WeightFn(P.space, np.linspace(1.0, 3.0, 8))
    report = ergodic_decay_check(P, w, n_max=60)
    assert 0.0 <= report.kappa < 1.0
    assert report.unique
    assert report.to_dict()["period"] == 1


def test_decay_check_rejects_bad_inputs():
    """Windowed kernels, short horizons and large test functions are refused."""
    with pytest.raises(ValueError, match="finite spaces"):
        ergodic_decay_check(walk_kernel(0.3, 10))
    P = two_state(0.1, 0.2)
    with pytest.raises(ValueError):
        ergodic_decay_check(P, n_max=1)
    with pytest.raises(ValueError, match="<= 1"):
        ergodic_decay_check(P, f_suite=[[2.0, 0.0]])
