"""Lebesgue decompositions, Doeblin splits and non-compactness set functions."""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .errors import DoeblinViolated
from .interval import Interval
from .kernel import power, sup_norm
from .models import (
    AtomicMeasure,
    DensityKernel,
    DoeblinCertificate,
    FloatArray,
    Kernel,
    KernelKind,
    StateSpace,
)

logger = logging.getLogger(__name__)

# Growth ratio between successive partition levels that marks an atom
ATOM_GROWTH_RATIO = 1.75
# Default density level standing in for the limit k -> infinity
DEFAULT_DENSITY_CUTOFF = 1e6

Family = Union[Kernel, Sequence[AtomicMeasure]]


class Decomposition(NamedTuple):
    density: FloatArray
    singular: AtomicMeasure


class KernelDecomposition(NamedTuple):
    density: DensityKernel
    singular: Kernel


def _nu_vector(nu: AtomicMeasure) -> FloatArray:
    nu.require_probability()
    return np.asarray(np.real(nu.to_dense()), dtype=np.float64)


def lebesgue_decompose(mu: AtomicMeasure, nu: AtomicMeasure) -> Decomposition:
    """Split μ into density·ν plus a part singular to ν.

    Mass μ puts beyond the window is counted as singular.
    """
    mu.space.check_same(nu.space)
    nu_vec = _nu_vector(nu)
    mu_vec = mu.to_dense()
    charged = nu_vec > 0
    density = np.zeros(mu_vec.shape, dtype=mu_vec.dtype)
    density[charged] = mu_vec[charged] / nu_vec[charged]
    singular_vec = np.where(charged, 0, mu_vec)
    singular = AtomicMeasure.from_dense(mu.space, singular_vec, mu.tail_bound)
    return Decomposition(density, singular)


def kernel_decompose(K: Kernel, nu: AtomicMeasure) -> KernelDecomposition:
    """Row-wise Lebesgue decomposition of a positive kernel against ν."""
    K.space.check_same(nu.space)
    if K.kind is not KernelKind.POSITIVE:
        raise ValueError("kernel_decompose needs a positive kernel")
    nu_vec = _nu_vector(nu)
    charged = nu_vec > 0
    inv = np.zeros_like(nu_vec)
    inv[charged] = 1.0 / nu_vec[charged]
    alpha = sp.csr_matrix(K.matrix @ sp.diags(inv))
    singular = sp.csr_matrix(K.matrix @ sp.diags((~charged).astype(np.float64)))
    singular_kernel = Kernel(K.space, singular, K.tails.copy(), tail_reach=K.tail_reach)
    return KernelDecomposition(DensityKernel(nu, alpha), singular_kernel)


@dataclass
class DensityLadder:
    """Cell-average densities φ_1..φ_depth of a grid kernel.

    levels[m-1] has shape (rows, 2**m); entry (x, k) is K(x, B_k)/R(x, B_k)
    on the k-th dyadic cell of level m.
    """

    levels: list[FloatArray]
    grid_size: int
    residual_singular: list[float] = field(default_factory=list)
    atoms: list[tuple[int, int]] = field(default_factory=list)

    @property
    def depth(self) -> int:
        return len(self.levels)

    def density_at(self, level: int) -> FloatArray:
        """φ_level expanded to the full grid."""
        cells = self.levels[level - 1]
        return np.repeat(cells, self.grid_size // cells.shape[1], axis=1)


def partition_density(K: Kernel, R: Kernel, depth: int) -> DensityLadder:
    """Dyadic partition-refinement densities of K against R on [0, 1].

    Cells where R has no mass but K has some contribute to the residual
    singular mass of that level (sup over rows).
    """
    K.space.check_same(R.space)
    n = K.n_states
    if n & (n - 1) or n < 2:
        raise ValueError(f"Grid size must be a power of two >= 2, got {n}")
    if depth < 1 or 2**depth > n:
        raise ValueError(f"depth must be in 1..{int(np.log2(n))}, got {depth}")
    k_dense = np.asarray(np.real(K.to_dense()), dtype=np.float64)
    r_dense = np.asarray(np.real(R.to_dense()), dtype=np.float64)
    if np.any(r_dense.sum(axis=1) <= 0):
        raise ValueError("Reference kernel rows need positive mass")

    levels: list[FloatArray] = []
    residual: list[float] = []
    for m in range(1, depth + 1):
        cells = 2**m
        k_cells = k_dense.reshape(n, cells, n // cells).sum(axis=2)
        r_cells = r_dense.reshape(n, cells, n // cells).sum(axis=2)
        phi = np.divide(k_cells, r_cells, out=np.zeros_like(k_cells), where=r_cells > 0)
        lost = np.where(r_cells > 0, 0.0, np.abs(k_cells)).sum(axis=1)
        levels.append(phi)
        residual.append(float(lost.max()))

    atoms: list[tuple[int, int]] = []
    if depth >= 2:
        fine, coarse = levels[-1], levels[-2]
        parent = np.repeat(coarse, 2, axis=1)
        ratio = np.divide(fine, parent, out=np.zeros_like(fine), where=parent > 0)
        xs, ks = np.nonzero(ratio >= ATOM_GROWTH_RATIO)
        atoms = [(int(x), int(k)) for x, k in zip(xs, ks)]
        if atoms:
            logger.debug("partition density flagged %d atom cells at depth %d", len(atoms), depth)
    return DensityLadder(levels, n, residual, atoms)


@dataclass
class DoeblinSplit:
    """Q^ℓ = T_{ν,α} + S with S >= 0 and ∥S∥ <= ρ^ℓ."""

    T: DensityKernel
    S: Kernel
    Q_ell: Kernel
    threshold: float
    condition: Interval
    s_norm: float
    certificate: DoeblinCertificate


def _greedy_small_set(
    row_idx: npt.NDArray[np.int64],
    row_val: FloatArray,
    nu_vec: FloatArray,
    eta: float,
) -> tuple[list[int], float, float]:
    """Heaviest set A with ν(A) <= eta built by decreasing density.

    Returns (A, Q(x, A), fractional-knapsack upper bound).
    """
    nu_row = nu_vec[row_idx]
    free = nu_row <= 0
    chosen = list(row_idx[free])
    mass = float(row_val[free].sum())
    idx = row_idx[~free]
    val = row_val[~free]
    weights = nu_row[~free]
    order = np.lexsort((idx, -(val / weights)))
    budget = eta
    upper = mass
    for j in order:
        if weights[j] <= budget:
            budget -= weights[j]
            mass += float(val[j])
            upper += float(val[j])
            chosen.append(int(idx[j]))
        else:
            upper += float(val[j]) * budget / float(weights[j])
            break
    return sorted(int(c) for c in chosen), mass, upper


def doeblin_split(Q: Kernel, cert: DoeblinCertificate, tol: float = 1e-12) -> DoeblinSplit:
    """Build T_{ν,α} <= Q^ℓ with a residual of norm at most ρ^ℓ.

    Condition (D) is scanned row by row on the greedy small set; the
    fractional relaxation of that knapsack gives the upper end of the
    reported condition interval.

    Raises:
        DoeblinViolated: With the offending row and small set.
    """
    Q.space.check_same(cert.nu.space)
    if Q.kind is not KernelKind.POSITIVE:
        raise ValueError("doeblin_split needs a positive kernel")
    nu_vec = _nu_vector(cert.nu)
    q_ell = power(Q, cert.ell)
    target = cert.bound
    mat = q_ell.matrix

    worst_lo = 0.0
    worst_hi = 0.0
    for x in range(q_ell.n_states):
        start, end = mat.indptr[x], mat.indptr[x + 1]
        chosen, mass, upper = _greedy_small_set(
            mat.indices[start:end], mat.data[start:end], nu_vec, cert.eta
        )
        mass += float(q_ell.tails[x])
        upper += float(q_ell.tails[x])
        if mass > target + tol:
            raise DoeblinViolated(
                f"Q^{cert.ell}({x}, A) = {mass:.12g} > rho^ell = {target:.12g} "
                f"on A = {chosen} with nu(A) <= {cert.eta}",
                row=x,
                witness=tuple(chosen),
                mass=mass,
            )
        worst_lo = max(worst_lo, mass)
        worst_hi = max(worst_hi, upper)

    threshold = sup_norm(q_ell) / cert.eta
    charged = nu_vec > 0
    inv = np.zeros_like(nu_vec)
    inv[charged] = 1.0 / nu_vec[charged]
    alpha_prime = sp.csr_matrix(mat @ sp.diags(inv))
    keep = alpha_prime.copy()
    keep.data = np.where(keep.data <= threshold, keep.data, 0.0)
    keep.eliminate_zeros()
    T = DensityKernel(cert.nu, keep)

    # S holds the exact Q^ℓ entries on ν-null states and above the threshold
    cols = mat.indices
    dens = mat.data * inv[cols]
    residual_mask = (~charged[cols]) | (dens > threshold)
    s_matrix = sp.csr_matrix(
        (np.where(residual_mask, mat.data, 0.0), cols.copy(), mat.indptr.copy()),
        shape=mat.shape,
    )
    s_matrix.eliminate_zeros()
    S = Kernel(Q.space, s_matrix, q_ell.tails.copy(), tail_reach=q_ell.tail_reach)

    s_norm = sup_norm(S)
    if (s_matrix.data.size and s_matrix.data.min() < 0) or s_norm > target + tol:
        row = int(np.argmax(S.row_mass() + S.tails))
        witness = tuple(int(y) for y in S.row(row).indices)
        raise DoeblinViolated(
            f"Residual norm {s_norm:.12g} exceeds rho^ell = {target:.12g} at row {row}",
            row=row,
            witness=witness,
            mass=s_norm,
        )
    logger.debug(
        "doeblin split ell=%d: threshold=%.6g |S|=%.6g condition=[%.6g, %.6g]",
        cert.ell, threshold, s_norm, worst_lo, worst_hi,
    )
    return DoeblinSplit(
        T=T,
        S=S,
        Q_ell=q_ell,
        threshold=threshold,
        condition=Interval.outward_nonneg(worst_lo, worst_hi),
        s_norm=s_norm,
        certificate=cert,
    )


def ui_tail(alpha: DensityKernel, m: float) -> float:
    """sup_x Σ_{y: α(x,y) >= m} α(x, y) ν({y}).

    Uses α^{(w)} when the density kernel is weighted.
    """
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    a = alpha.effective_alpha().copy()
    a.data = np.where(a.data >= m, a.data, 0.0)
    rows = np.asarray(a @ alpha.nu_dense()).ravel()
    return float(rows.max()) if rows.size else 0.0


def _family_rows(family: Family) -> tuple[sp.csr_matrix, FloatArray, StateSpace]:
    """|μ| of each family member as a sparse row, tails, and the space."""
    if isinstance(family, Kernel):
        return sp.csr_matrix(abs(family.matrix)), family.tails, family.space
    members = list(family)
    if not members:
        raise ValueError("Measure family must be nonempty")
    space = members[0].space
    for mu in members:
        space.check_same(mu.space)
    n = space.n_states
    rows = np.concatenate([np.full(mu.indices.size, i) for i, mu in enumerate(members)])
    cols = np.concatenate([mu.indices for mu in members])
    data = np.concatenate([np.abs(mu.weights) for mu in members]).astype(np.float64)
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(len(members), n))
    tails = np.array([mu.tail_bound for mu in members])
    return matrix, tails, space


def light_states(nu: AtomicMeasure, eta: float) -> npt.NDArray[np.bool_]:
    """Window states lying in some set of ν-mass <= eta.

    These are the atoms with ν(y) <= eta, the far run y..last whose ν-mass
    plus ν's tail is <= eta, and the frontier state. When ν keeps more
    than eta on the frontier the window cannot separate small sets and
    every state is light. Finite spaces have no light states.
    """
    space = nu.space
    nu_vec = _nu_vector(nu)
    if not space.is_windowed:
        return np.zeros(space.n_states, dtype=bool)
    if nu_vec[space.last] > eta:
        return np.ones(space.n_states, dtype=bool)
    far = np.cumsum(nu_vec[::-1])[::-1] + nu.tail_bound <= eta
    light = (nu_vec <= eta) | far
    light[space.last] = True
    return light


def _small_rows(
    matrix: sp.csr_matrix, nu: AtomicMeasure, nu_vec: FloatArray, density_cutoff: float
) -> FloatArray:
    """Per member: ν-a.c. mass at density >= k or on states of ν-mass <= 1/k."""
    if not nu.space.is_windowed:
        return np.zeros(matrix.shape[0])
    charged = nu_vec > 0
    inv = np.zeros_like(nu_vec)
    inv[charged] = 1.0 / nu_vec[charged]
    light = light_states(nu, 1.0 / density_cutoff)
    coo = matrix.tocoo()
    dens = coo.data * inv[coo.col]
    small = charged[coo.col] & ((dens >= density_cutoff) | light[coo.col])
    small_mass = sp.csr_matrix(
        (np.where(small, coo.data, 0.0), (coo.row, coo.col)), shape=matrix.shape
    )
    return np.asarray(small_mass.sum(axis=1)).ravel()


def _null_rows(matrix: sp.csr_matrix, nu_vec: FloatArray) -> FloatArray:
    null = sp.diags((nu_vec <= 0).astype(np.float64))
    return np.asarray((matrix @ null).sum(axis=1)).ravel()


def partial_nu(
    family: Family, nu: AtomicMeasure, density_cutoff: float = DEFAULT_DENSITY_CUTOFF
) -> float:
    """∂_ν(M) = lim_k sup_μ μ{dμ/dν >= k}.

    On finite spaces every density is bounded and the limit is 0. On a
    window the limit is evaluated at k = `density_cutoff`: each member
    counts its mass at density >= k, on the light states of ν-mass
    <= 1/k (see `light_states`) and beyond the window, which bounds the
    limit from above.
    """
    matrix, tails, space = _family_rows(family)
    space.check_same(nu.space)
    nu_vec = _nu_vector(nu)
    if not space.is_windowed:
        return 0.0
    rows = _small_rows(matrix, nu, nu_vec, density_cutoff) + tails
    return float(rows.max()) if rows.size else 0.0


def singular_mass(family: Family, nu: AtomicMeasure) -> float:
    """sup_μ of the mass singular to ν, escaping mass included."""
    matrix, tails, space = _family_rows(family)
    space.check_same(nu.space)
    rows = _null_rows(matrix, _nu_vector(nu)) + tails
    return float(rows.max()) if rows.size else 0.0


def delta_nu_bounds(
    family: Family, nu: AtomicMeasure, density_cutoff: float = DEFAULT_DENSITY_CUTOFF
) -> Interval:
    """Interval [∂_ν, hi] enclosing Δ_ν(M), hi <= ∂_ν + sup singular mass.

    The upper end adds each member's singular mass to its own small-set
    mass, so escaping mass is counted once. On a window both ends are
    evaluated at k = `density_cutoff` and bound the limit from above.
    """
    matrix, tails, space = _family_rows(family)
    space.check_same(nu.space)
    nu_vec = _nu_vector(nu)
    small = _small_rows(matrix, nu, nu_vec, density_cutoff)
    null = _null_rows(matrix, nu_vec)
    if space.is_windowed:
        lo = float((small + tails).max())
    else:
        lo = 0.0
    hi = float((small + null + tails).max())
    if hi == lo:
        return Interval.point(lo)
    return Interval.outward_nonneg(lo, hi)


def delta_nu(
    family: Family, nu: AtomicMeasure, density_cutoff: float = DEFAULT_DENSITY_CUTOFF
) -> float:
    """Midpoint of `delta_nu_bounds`; equals ∂_ν for absolutely continuous families."""
    return delta_nu_bounds(family, nu, density_cutoff).mid


def lambda_tail(family: Family, exhaustion: Optional[Sequence[Sequence[int]]] = None) -> float:
    """Λ(M) along an exhaustion F_1 ⊂ F_2 ⊂ ... of the window.

    The tails sup_μ |μ|(window \\ F_k) + tail are nonincreasing in k, so
    the limit is the value at the last set. The default exhaustion is
    {0..k-1} for k up to the last window state (the whole space on
    finite spaces).
    """
    matrix, tails, space = _family_rows(family)
    n = space.n_states
    if exhaustion is None:
        last: set[int] = set(range(n - 1)) if space.is_windowed else set(range(n))
    else:
        sets = [set(int(x) for x in f) for f in exhaustion]
        if not sets:
            raise ValueError("Exhaustion must contain at least one set")
        for smaller, larger in zip(sets, sets[1:]):
            if not smaller <= larger:
                raise ValueError("Exhaustion sets must be increasing")
        last = sets[-1]
    outside = np.ones(n)
    if last:
        outside[sorted(last)] = 0.0
    rows = np.asarray(matrix @ outside).ravel() + tails
    return float(rows.max()) if rows.size else 0.0
