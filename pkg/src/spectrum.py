"""Certified upper bounds on the essential spectral radius."""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .decompose import (
    DEFAULT_DENSITY_CUTOFF,
    delta_nu_bounds,
    kernel_decompose,
    ui_tail,
)
from .errors import (
    ERROR_SIZE_LIMIT,
    NotDominated,
    NotUniformlyIntegrable,
    SizeLimit,
)
from .interval import Interval
from .kernel import (
    certified_radius_lower,
    conjugate,
    power,
    spectral_radius_upper,
    sup_norm,
)
from .models import (
    AtomicMeasure,
    CheckResult,
    DensityKernel,
    EssBound,
    EssMethod,
    Kernel,
    KernelKind,
    Multiplier,
    WeightFn,
)

logger = logging.getLogger(__name__)

DEFAULT_N_POWER = 32
DEFAULT_UI_TOLERANCE = 1e-9
DEFAULT_ORACLE_MAX_STATES = 1000

Candidate = tuple[int, AtomicMeasure]


def _verdict(value: Interval, radius_lower: Optional[float]) -> Optional[bool]:
    if radius_lower is None:
        return None
    return value.hi < radius_lower


def re_upper_doeblin(
    Q: Kernel,
    candidates: Sequence[Candidate],
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF,
    radius_lower: Optional[float] = None,
) -> EssBound:
    """min over (ℓ, ν) candidates of Δ_ν({Q^ℓ(x, .)}_x)^{1/ℓ}.

    Args:
        Q: Kernel to bound
        candidates: (ell, nu) pairs with nu a probability
        density_cutoff: Density level standing in for k -> infinity
        radius_lower: Certified lower bound on r(Q); defaults to
            certified_radius_lower(Q)

    Returns:
        EssBound; an empty candidate list gives an unbounded report.
    """
    if not candidates:
        return EssBound(Interval.unbounded(), EssMethod.DOEBLIN_TAIL, {"candidates": []})
    lower = certified_radius_lower(Q) if radius_lower is None else radius_lower

    best: Optional[Interval] = None
    best_witness: dict = {}
    sweep = []
    for ell, nu in candidates:
        if ell < 1:
            raise ValueError(f"ell must be >= 1, got {ell}")
        delta = delta_nu_bounds(power(Q, ell), nu, density_cutoff)
        value = delta.root(ell)
        sweep.append({"ell": ell, "delta_nu": delta, "value": value})
        logger.debug("doeblin candidate ell=%d: delta_nu=%s bound=%s", ell, delta, value)
        if best is None or value.hi < best.hi:
            best = value
            best_witness = {"ell": ell, "nu": nu.to_dict(), "delta_nu": delta}
    assert best is not None
    best_witness["candidates"] = sweep
    best_witness["density_cutoff"] = density_cutoff
    return EssBound(best, EssMethod.DOEBLIN_TAIL, best_witness, _verdict(best, lower))


def _power_norm_table(S: Kernel, n_power: int) -> list[tuple[int, float]]:
    """(n, ∥S^n∥^{1/n}) for n = 1, 2, 4, ... and n_power itself."""
    table = []
    current = S
    n = 1
    while n <= n_power:
        table.append((n, sup_norm(current) ** (1.0 / n)))
        if 2 * n > n_power:
            break
        current = power(current, 2)
        n *= 2
    if table[-1][0] != n_power:
        table.append((n_power, sup_norm(power(S, n_power)) ** (1.0 / n_power)))
    return table


def residual_kernel(Q_ell: Kernel, T: DensityKernel, tol: float = 1e-12) -> Kernel:
    """S = Q^ℓ − T_{ν,α}, checked entrywise against −tol.

    Raises:
        NotDominated: With the (x, y) location of the most negative entry.
    """
    Q_ell.space.check_same(T.space)
    t_kernel = T.to_kernel()
    s_matrix = (Q_ell.matrix - t_kernel.matrix).tocsr()
    s_matrix.eliminate_zeros()
    data = np.real(s_matrix.data)
    if data.size and data.min() < -tol:
        j = int(np.argmin(data))
        x = int(np.searchsorted(s_matrix.indptr, j, side="right") - 1)
        y = int(s_matrix.indices[j])
        raise NotDominated(
            f"Q^ell - T is negative at ({x}, {y}): {data[j]:.6g}", x=x, y=y, value=float(data[j])
        )
    if Q_ell.kind is KernelKind.POSITIVE:
        # |S| dominates S, so its power norms still bound r(S)
        s_matrix.data = np.abs(data)
    return Kernel(Q_ell.space, s_matrix, Q_ell.tails.copy(), Q_ell.kind, False, Q_ell.tail_reach)


def re_upper_residual(
    Q: Kernel,
    ell: int,
    T: DensityKernel,
    n_power: int = DEFAULT_N_POWER,
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF,
    ui_tolerance: float = DEFAULT_UI_TOLERANCE,
    radius_lower: Optional[float] = None,
) -> EssBound:
    """(∥S^n∥^{1/n})^{1/ℓ} with S = Q^ℓ − T_{ν,α} >= 0.

    Raises:
        NotDominated: If S has a negative entry.
        NotUniformlyIntegrable: If ui_tail(T, density_cutoff) > ui_tolerance.
    """
    if ell < 1 or n_power < 1:
        raise ValueError(f"ell and n_power must be >= 1, got {ell}, {n_power}")
    S = residual_kernel(power(Q, ell), T)
    tail = ui_tail(T, density_cutoff)
    if tail > ui_tolerance:
        raise NotUniformlyIntegrable(
            f"ui_tail at m={density_cutoff:.3g} is {tail:.6g} > {ui_tolerance:.3g}"
        )
    table = _power_norm_table(S, n_power)
    bound = min(v for _, v in table) ** (1.0 / ell)
    value = Interval.outward_nonneg(bound, bound)
    lower = certified_radius_lower(Q) if radius_lower is None else radius_lower
    witnesses = {
        "ell": ell,
        "nu": T.nu.to_dict(),
        "n_power": n_power,
        "power_norms": [{"n": n, "norm_root": v} for n, v in table],
        "min_residual_entry": float(np.real(S.matrix.data).min()) if S.matrix.nnz else 0.0,
        "ui_tail": tail,
    }
    logger.debug("residual bound ell=%d n=%d: %.12g", ell, n_power, bound)
    return EssBound(value, EssMethod.RESIDUAL_NORM, witnesses, _verdict(value, lower))


@dataclass(frozen=True)
class DoeblinStrategy:
    candidates: Sequence[Candidate]
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF


@dataclass(frozen=True)
class ResidualStrategy:
    ell: int
    T: DensityKernel
    n_power: int = DEFAULT_N_POWER
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF
    ui_tolerance: float = DEFAULT_UI_TOLERANCE


Strategy = Union[DoeblinStrategy, ResidualStrategy]


def re_upper_weighted(Q: Kernel, w: WeightFn, strategy: Strategy) -> EssBound:
    """Bound r_e^w(Q) = r_e(Q^{(w)}) by running a strategy on the conjugate."""
    conj = conjugate(Q, w)
    # 1 ∈ B_w, so Q1 = 1 still pins r^w(Q) >= 1
    lower = certified_radius_lower(Q)
    if isinstance(strategy, DoeblinStrategy):
        inner = re_upper_doeblin(conj, strategy.candidates, strategy.density_cutoff, lower)
    else:
        inner = re_upper_residual(
            conj,
            strategy.ell,
            strategy.T.conjugated(w),
            strategy.n_power,
            strategy.density_cutoff,
            strategy.ui_tolerance,
            lower,
        )
    witnesses = dict(inner.witnesses)
    witnesses["inner_method"] = inner.method.value
    witnesses["weight"] = w.to_dict()
    return EssBound(inner.value, EssMethod.WEIGHTED_CONJUGATE, witnesses, inner.quasi_compact)


class MultiplierBound(NamedTuple):
    r_bound: float
    re_bound: float
    weighted_bound: Optional[float]
    dichotomy_consistent: Optional[bool]


def multiplier_bound(
    Q: Kernel,
    chi: Multiplier,
    ell: int,
    S: Kernel,
    n_power: int = DEFAULT_N_POWER,
    r_b: Optional[Interval] = None,
) -> MultiplierBound:
    """Bounds for Q_χ: r(Q_χ) <= ∥χ∥ r(Q) and r_e(Q_χ) <= ∥χ∥ r(S)^{1/ℓ}.

    With an r_b bracket from the drift pipeline the weighted-space bound
    ∥χ∥ / r_b.lo is reported as well.
    """
    Q.space.check_same(S.space)
    norm = chi.norm_bound
    r_q = spectral_radius_upper(Q, None, n_power)
    s_root = min(v for _, v in _power_norm_table(S, n_power))
    re_bound = norm * s_root ** (1.0 / ell)
    r_bound = norm * r_q
    consistent: Optional[bool] = None
    if norm <= 1.0:
        consistent = re_bound <= r_q + 1e-12
    weighted = None if r_b is None else norm / r_b.lo
    return MultiplierBound(r_bound, re_bound, weighted, consistent)


def eigen_oracle(
    Q: Kernel,
    w: Optional[WeightFn] = None,
    max_states: int = DEFAULT_ORACLE_MAX_STATES,
) -> list[complex]:
    """Full spectrum of the dense (optionally w-conjugated) matrix.

    Windowed kernels are truncated to the window. Eigenvalues are ordered
    by decreasing modulus, then increasing argument.

    Raises:
        SizeLimit: If the window has more than max_states states.
    """
    n = Q.n_states
    if n > max_states:
        raise SizeLimit(ERROR_SIZE_LIMIT.format(what="eigen_oracle", size=n, limit=max_states))
    dense = Q.to_dense()
    if w is not None:
        dense = (dense / w.values[:, None]) * w.values[None, :]
    values = np.linalg.eigvals(dense.astype(np.complex128))
    modulus = np.round(np.abs(values), 12)
    angle = np.round(np.angle(values), 12)
    order = np.lexsort((angle, -modulus))
    return [complex(v) for v in values[order]]


def kstar_check(
    Q: Kernel,
    nu: AtomicMeasure,
    tolerance: float = DEFAULT_UI_TOLERANCE,
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF,
) -> CheckResult:
    """Rows ν-a.c. with uniformly ν-integrable densities, at the cutoff."""
    if Q.kind is not KernelKind.POSITIVE:
        raise ValueError("kstar_check needs a positive kernel")
    density, singular = kernel_decompose(Q, nu)
    sing_rows = singular.row_mass() + singular.tails
    row = int(np.argmax(sing_rows))
    sing = float(sing_rows[row])
    tail = ui_tail(density, density_cutoff)
    passed = sing <= tolerance and tail <= tolerance
    if passed:
        detail = "rows are uniformly absolutely continuous"
    elif sing > tolerance:
        detail = f"row {row} has singular mass {sing:.6g}"
    else:
        detail = f"densities not uniformly integrable: ui_tail={tail:.6g}"
    return CheckResult(
        name="kstar",
        passed=passed,
        witness={"singular_mass": sing, "row": row, "ui_tail": tail},
        detail=detail,
        error_type=NotUniformlyIntegrable,
    )
