"""Tests for the kernel operator algebra."""

import numpy as np
import pytest

from src.builtin_kernels import random_chain, substochastic, two_state, walk_kernel
from src.errors import IncompatibleTail, MissingTailBound, SpaceMismatch
from src.interval import Interval
from src.kernel import (
    adjoint_apply,
    apply_fn,
    certified_radius_lower,
    compose,
    conjugate,
    fourier_kernel,
    power,
    spectral_radius_bounds,
    spectral_radius_upper,
    sup_norm,
    weighted_norm,
)
from src.models import AtomicMeasure, KernelKind, StateSpace, WeightFn


def test_apply_fn_matches_dense_product():
    """Qf on a finite chain is the matrix-vector product."""
    P = random_chain(6, seed=1)
    f = np.arange(6, dtype=float)
    result = apply_fn(P, f)
    np.testing.assert_allclose(result.values, P.to_dense() @ f)
    assert np.all(result.radius == 0.0)


def test_apply_fn_needs_tail_bound():
    """Rows leaking past the window need a sup bound for f."""
    P = walk_kernel(0.3, 10)
    with pytest.raises(MissingTailBound, match="f_sup"):
        apply_fn(P, np.ones(11))

    result = apply_fn(P, np.ones(11), f_sup=1.0)
    assert result.values[10] == pytest.approx(0.7)
    assert result.radius[10] == pytest.approx(0.3)
    assert result.values[10] + result.radius[10] == pytest.approx(1.0)


def test_adjoint_norm_equals_sup_norm():
    """max over Dirac measures of |δ_x Q| equals the sup norm of Q."""
    for P in (walk_kernel(0.3, 20), substochastic(8, seed=3, mass=0.6), random_chain(8, seed=4)):
        norms = [
            adjoint_apply(P, AtomicMeasure.dirac(P.space, x)).total_variation
            for x in range(P.n_states)
        ]
        assert max(norms) == pytest.approx(sup_norm(P), rel=1e-12)


def test_adjoint_preserves_probability():
    """μP stays a probability measure for Markov P."""
    P = random_chain(10, seed=5)
    mu = AtomicMeasure.uniform(P.space)
    assert adjoint_apply(P, mu).is_probability()


def test_adjoint_space_mismatch():
    """Measures on another space are rejected."""
    P = two_state(0.1, 0.2)
    with pytest.raises(SpaceMismatch):
        adjoint_apply(P, AtomicMeasure.dirac(StateSpace.finite(3), 0))


def test_power_matches_dense():
    """Q^n agrees with numpy's matrix power; Q^0 is the identity."""
    P = random_chain(5, seed=7)
    np.testing.assert_allclose(power(P, 5).to_dense(), np.linalg.matrix_power(P.to_dense(), 5))
    np.testing.assert_allclose(power(P, 0).to_dense(), np.eye(5))
    with pytest.raises(ValueError):
        power(P, -1)


def test_compose_tracks_tails():
    """Tails of a windowed square keep the rows Markov."""
    P2 = compose(walk_kernel(0.3, 10), walk_kernel(0.3, 10))
    assert P2.markov
    assert P2.tails[9] == pytest.approx(0.09)
    assert P2.tails[10] == pytest.approx(0.3)
    assert P2.tail_reach == 2
    np.testing.assert_allclose(P2.row_mass() + P2.tails, 1.0)


def test_conjugated_walk_rows():
    """Interior rows of the z^x-conjugated walk are (√(pq), √(pq))."""
    P = walk_kernel(0.3, 50)
    w = WeightFn.geometric(P.space, np.sqrt(0.7 / 0.3))
    conj = conjugate(P, w)
    dense = conj.to_dense()
    assert dense[10, 9] == pytest.approx(0.458258, abs=1e-6)
    assert dense[10, 11] == pytest.approx(0.458258, abs=1e-6)
    assert dense[0, 0] + dense[0, 1] == pytest.approx(1.158258, abs=1e-6)
    assert conj.tails[50] == pytest.approx(0.458258, abs=1e-6)
    assert not conj.markov


def test_weighted_norm_walk():
    """The weighted norm of the walk is attained at the reflecting row."""
    P = walk_kernel(0.3, 50)
    w = WeightFn.geometric(P.space, np.sqrt(0.7 / 0.3))
    norm = weighted_norm(P, w)
    assert norm.contains(1.158258, tol=1e-6)
    assert norm.width < 1e-12


def test_conjugate_needs_tail_model():
    """A weight without tail model cannot conjugate a leaking kernel."""
    P = walk_kernel(0.3, 10)
    with pytest.raises(IncompatibleTail, match="tail model"):
        conjugate(P, WeightFn.constant(P.space))


def test_conjugate_by_constant_keeps_markov():
    """Constant weights leave the kernel unchanged."""
    P = random_chain(4, seed=2)
    conj = conjugate(P, WeightFn.constant(P.space, 3.0))
    assert conj.markov
    np.testing.assert_allclose(conj.to_dense(), P.to_dense())


def test_markov_radius_is_one():
    """P1 = 1 pins the spectral radius of a Markov kernel."""
    assert spectral_radius_bounds(two_state(0.1, 0.2)) == Interval.point(1.0)
    assert spectral_radius_bounds(random_chain(6, seed=0), n=4) == Interval.point(1.0)


def test_weighted_walk_radius_bounds():
    """The weighted bound holds the Markov lower end 1."""
    P = walk_kernel(0.3, 50)
    w = WeightFn.geometric(P.space, np.sqrt(0.7 / 0.3))
    bounds = spectral_radius_bounds(P, w, n=1)
    assert bounds.contains(1.0)
    assert bounds.hi == pytest.approx(1.158258, abs=1e-6)


def test_collatz_wielandt_lower_bound():
    """Rows of mass 0.5 give r(Q) = 0.5 from both sides."""
    Q = substochastic(5, seed=11, mass=0.5)
    assert certified_radius_lower(Q) is None
    lower = certified_radius_lower(Q, np.ones(5))
    assert lower is not None
    assert 0.5 - 1e-12 <= lower <= 0.5
    assert spectral_radius_upper(Q) == pytest.approx(0.5)
    with pytest.raises(ValueError, match="positive"):
        certified_radius_lower(Q, np.zeros(5))


def test_spectral_radius_upper_decreases_with_power():
    """Norms of powers give tighter radius bounds."""
    Q = substochastic(6, seed=12, mass=0.8)
    one = spectral_radius_upper(Q, n=1)
    eight = spectral_radius_upper(Q, n=8)
    assert eight <= one + 1e-12
    assert eight >= 0.8 - 1e-9


def test_fourier_kernel():
    """χ_t has modulus one, so |P(t)| = P entrywise; t = 0 returns P."""
    P = random_chain(5, seed=9)
    xi = np.arange(5, dtype=float)
    Pt = fourier_kernel(P, xi, 0.8)
    assert Pt.kind is KernelKind.COMPLEX
    assert not Pt.markov
    np.testing.assert_allclose(np.abs(Pt.to_dense()), P.to_dense())
    assert sup_norm(Pt) == pytest.approx(1.0)
    np.testing.assert_allclose(fourier_kernel(P, xi, 0.0).to_dense(), P.to_dense())
