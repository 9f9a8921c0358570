"""Operator algebra on discrete kernels.

Kernels act on functions on the right, (Qf)(x) = Σ_y f(y) Q(x, {y}), and on
measures on the left, (μQ)({y}) = Σ_x μ({x}) Q(x, {y}). Every operation
carries the row tail bounds along so that results on windowed spaces stay
certified.
"""

import logging
from typing import NamedTuple, Optional, Union

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .errors import (
    ERROR_INCOMPATIBLE_TAIL,
    ERROR_MISSING_TAIL,
    IncompatibleTail,
    MissingTailBound,
)
from .interval import Interval
from .models import (
    AtomicMeasure,
    FloatArray,
    Kernel,
    KernelKind,
    Multiplier,
    WeightFn,
)

logger = logging.getLogger(__name__)

WeightLike = Union[WeightFn, npt.ArrayLike]


class FnValues(NamedTuple):
    """Function values on the window with a per-point error radius."""

    values: npt.NDArray
    radius: FloatArray


def apply_fn(Q: Kernel, f: npt.ArrayLike, f_sup: Optional[float] = None) -> FnValues:
    """Evaluate Qf on the window.

    Args:
        Q: Kernel to apply
        f: Function values on every window state
        f_sup: Declared bound on |f| beyond the window. Required when
            some row of Q has tail mass.

    Returns:
        FnValues with (Qf)(x) over window states and the radius
        tails[x] * f_sup bounding the unseen contribution.

    Raises:
        MissingTailBound: If Q has tail mass and f_sup is None.
    """
    arr = np.asarray(f)
    if arr.shape != (Q.n_states,):
        raise ValueError(f"f needs {Q.n_states} values, got {arr.shape}")
    values = Q.matrix @ arr
    if np.any(Q.tails > 0):
        if f_sup is None:
            raise MissingTailBound(ERROR_MISSING_TAIL.format(tail=float(Q.tails.max())))
        radius = Q.tails * abs(float(f_sup))
    else:
        radius = np.zeros(Q.n_states)
    return FnValues(np.asarray(values), radius)


def adjoint_apply(Q: Kernel, mu: AtomicMeasure) -> AtomicMeasure:
    """μQ, the action of the adjoint operator on a bounded measure."""
    Q.space.check_same(mu.space)
    dense = mu.to_dense()
    out = np.asarray(Q.matrix.T @ dense).ravel()
    tail = float(np.abs(dense) @ Q.tails)
    if mu.tail_bound > 0:
        # mass outside the window is moved by rows we do not store
        tail += mu.tail_bound * sup_norm(Q)
    return AtomicMeasure.from_dense(Q.space, out, tail)


def compose(Q1: Kernel, Q2: Kernel) -> Kernel:
    """Q1 Q2; tails are bounded by |Q1| t2 + t1 ∥Q2∥ row-wise."""
    Q1.space.check_same(Q2.space)
    matrix = sp.csr_matrix(Q1.matrix @ Q2.matrix)
    tails = np.asarray(abs(Q1.matrix) @ Q2.tails).ravel()
    if np.any(Q1.tails > 0):
        tails = tails + Q1.tails * sup_norm(Q2)
    complex_kind = KernelKind.COMPLEX in (Q1.kind, Q2.kind)
    markov = Q1.markov and Q2.markov
    if markov:
        # rounding drift in long products stays far below the Markov tolerance
        mass = np.asarray(matrix.sum(axis=1)).ravel() + tails
        markov = bool(np.all(np.abs(mass - 1.0) <= 1e-12))
    reach = Q1.tail_reach + Q2.tail_reach if np.any(tails > 0) else 0
    return Kernel(
        Q1.space,
        matrix,
        tails,
        KernelKind.COMPLEX if complex_kind else KernelKind.POSITIVE,
        markov,
        reach,
    )


def power(Q: Kernel, n: int) -> Kernel:
    """Q^n by repeated squaring; Q^0 is the identity."""
    if n < 0:
        raise ValueError(f"Kernel power must be >= 0, got {n}")
    result = Kernel.identity(Q.space)
    base = Q
    k = n
    while k > 0:
        if k & 1:
            result = compose(result, base)
        k >>= 1
        if k:
            base = compose(base, base)
    return result


def sup_norm(Q: Kernel) -> float:
    """sup_x (Σ_y |Q(x, {y})| + tail_x)."""
    if Q.n_states == 0:
        return 0.0
    return float(np.max(Q.row_mass() + Q.tails))


def _weight_values(w: WeightLike) -> FloatArray:
    if isinstance(w, WeightFn):
        return w.values
    arr = np.asarray(w, dtype=np.float64)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("Conjugation weights must be finite and > 0")
    return arr


def conjugate(Q: Kernel, w: WeightLike) -> Kernel:
    """Q^{(w)}(x, {y}) = Q(x, {y}) w(y) / w(x).

    `w` may be a WeightFn or any positive array on the window (the latter
    only for kernels without tail mass).

    Raises:
        IncompatibleTail: If Q has tail mass and w cannot be extrapolated.
    """
    values = _weight_values(w)
    if values.shape != (Q.n_states,):
        raise ValueError(f"Weight needs {Q.n_states} values, got {values.shape}")
    if isinstance(w, WeightFn):
        Q.space.check_same(w.space)
    matrix = sp.csr_matrix(sp.diags(1.0 / values) @ Q.matrix @ sp.diags(values))
    tails = Q.tails
    if np.any(Q.tails > 0):
        if not isinstance(w, WeightFn) or not w.has_tail_model:
            row = int(np.argmax(Q.tails))
            raise IncompatibleTail(
                ERROR_INCOMPATIBLE_TAIL.format(row=row, tail=float(Q.tails[row]))
            )
        w_out = w.sup_within(Q.tail_reach)
        tails = Q.tails * w_out / values
    markov = Q.markov and bool(np.all(values == values[0]))
    return Kernel(Q.space, matrix, tails, Q.kind, markov, Q.tail_reach)


def weighted_norm(Q: Kernel, w: WeightFn) -> Interval:
    """Certified interval around sup_x (|Q|w)(x) / w(x)."""
    conj = conjugate(Q, w)
    window = conj.row_mass()
    lo = float(window.max())
    hi = float((window + conj.tails).max())
    return Interval.outward_nonneg(lo, hi)


def spectral_radius_upper(Q: Kernel, w: Optional[WeightFn] = None, n: int = 1) -> float:
    """∥Q^n∥_w^{1/n}, an upper bound on r^w(Q) for every n >= 1."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    base = Q if w is None else conjugate(Q, w)
    norm = sup_norm(power(base, n))
    bound = float(norm ** (1.0 / n))
    logger.debug("spectral radius bound n=%d: %.12g", n, bound)
    return bound


def certified_radius_lower(Q: Kernel, v: Optional[npt.ArrayLike] = None) -> Optional[float]:
    """A certified lower bound on r(Q), or None when none is available.

    Markov kernels give 1 (Q1 = 1). For a positive kernel and a positive
    vector v the Collatz-Wielandt bound min_x (Qv)(x)/v(x) applies.
    """
    if Q.markov:
        return 1.0
    if v is None or Q.kind is not KernelKind.POSITIVE:
        return None
    vec = np.asarray(v, dtype=np.float64)
    if vec.shape != (Q.n_states,) or np.any(vec <= 0):
        raise ValueError("Collatz-Wielandt vector must be positive on the window")
    ratio = np.asarray(Q.matrix @ vec).ravel() / vec
    return max(0.0, float(np.nextafter(ratio.min(), -np.inf)))


def spectral_radius_bounds(Q: Kernel, w: Optional[WeightFn] = None, n: int = 1) -> Interval:
    """Interval [certified lower bound, ∥Q^n∥_w^{1/n}] for r^w(Q)."""
    hi = spectral_radius_upper(Q, w, n)
    lo = certified_radius_lower(Q)
    if Q.markov and (w is None or np.all(w.values == w.values[0])):
        # P1 = 1 pins the radius
        return Interval.point(1.0)
    if lo is None:
        return Interval.outward_nonneg(0.0, hi)
    return Interval.outward_nonneg(min(lo, hi), hi)


def multiplier(Q: Kernel, chi: Multiplier) -> Kernel:
    """Q_χ(x, {y}) = χ(x, y) Q(x, {y}); tails scale by ∥χ∥."""
    n = Q.n_states
    rows = np.repeat(np.arange(n), np.diff(Q.matrix.indptr))
    cols = Q.matrix.indices
    if chi.values.ndim == 1:
        if chi.values.size != n:
            raise ValueError(f"Multiplier has {chi.values.size} values, space has {n}")
        factors = chi.values[cols]
    else:
        if chi.values.shape != (n, n):
            raise ValueError(f"Multiplier table must be {n}x{n}")
        factors = chi.values[rows, cols]
    data = Q.matrix.data.astype(np.complex128) * factors
    matrix = sp.csr_matrix((data, cols.copy(), Q.matrix.indptr.copy()), shape=(n, n))
    return Kernel(
        Q.space,
        matrix,
        Q.tails * chi.norm_bound,
        KernelKind.COMPLEX,
        False,
        Q.tail_reach,
    )


def fourier_kernel(P: Kernel, xi: npt.ArrayLike, t: float) -> Kernel:
    """P(t) with χ_t(x, y) = exp(i t ξ(y))."""
    return multiplier(P, Multiplier.fourier(xi, t))
