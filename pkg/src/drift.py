"""Drift and minorization certificates and the renewal bound on r_e^w.

Hitting-time generating functions E_x[r^σ_C] are bracketed by monotone
Neumann iterations: the lower iterate starts at 0 and kills paths leaving
the window, the upper iterate starts at a verified supersolution (the
drift weight, or one built from a direct solve on finite spaces) and pays
the weight bound at window exits.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .decompose import DEFAULT_DENSITY_CUTOFF, ui_tail
from .errors import (
    ERROR_INCOMPATIBLE_TAIL,
    ERROR_INCONCLUSIVE,
    ERROR_SIZE_LIMIT,
    Divergent,
    IncompatibleTail,
    Inconclusive,
    NotDominated,
    NotFound,
    NotMarkov,
    NotUniformlyIntegrable,
    SizeLimit,
)
from .interval import Interval
from .kernel import apply_fn, compose, power
from .models import (
    AtomicMeasure,
    CheckResult,
    DensityKernel,
    DriftCertificate,
    FloatArray,
    Kernel,
    KernelKind,
    MinorizationCertificate,
    RenewalProfile,
    StateSpace,
    WeightFn,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 50_000
DEFAULT_NEUMANN_TOL = 1e-13
DEFAULT_BISECTION_STEPS = 60
DEFAULT_ENUMERATION_LIMIT = 20_000_000
DEFAULT_N_CAP = 64
DEFAULT_RHO_MARGIN = 0.01
DEFAULT_UI_TOLERANCE = 1e-9

# Relative slack on pointwise certificate inequalities
CHECK_RTOL = 1e-12
# Iterates above this size count as divergence
DIVERGENCE_LIMIT = 1e200


def _state_mask(n: int, states: Iterable[int]) -> npt.NDArray[np.bool_]:
    mask = np.zeros(n, dtype=bool)
    mask[sorted(int(x) for x in states)] = True
    return mask


def _weight_out(w: WeightFn, reach: int) -> float:
    """Bound on w over the states that window exits can reach."""
    if not w.has_tail_model:
        return math.inf
    return w.sup_within(reach)


def _apply_weight(P: Kernel, w: WeightFn) -> FloatArray:
    """Upper bound on (Pw)(x) on the window, tail mass paying w_out."""
    if np.any(P.tails > 0):
        if not w.has_tail_model:
            row = int(np.argmax(P.tails))
            raise IncompatibleTail(
                ERROR_INCOMPATIBLE_TAIL.format(row=row, tail=float(P.tails[row]))
            )
        result = apply_fn(P, w.values, f_sup=_weight_out(w, P.tail_reach))
    else:
        result = apply_fn(P, w.values)
    return np.asarray(np.real(result.values), dtype=np.float64) + result.radius


def verify_drift(P: Kernel, cert: DriftCertificate, rtol: float = CHECK_RTOL) -> CheckResult:
    """Check Pw <= r1^{-1}(w 1_{C^c} + eta 1_C) at every window state.

    On success the witness also records the global constant of the
    implied bound Pw <= r1^{-1} w + r1^{-1} eta.
    """
    P.space.check_same(cert.w.space)
    if not P.markov:
        raise NotMarkov("verify_drift needs a Markov kernel")
    lhs = _apply_weight(P, cert.w)
    rhs = cert.rhs()
    excess = lhs - rhs
    worst = int(np.argmax(excess / np.maximum(rhs, 1.0)))
    passed = bool(np.all(excess <= rtol * np.maximum(rhs, 1.0)))
    witness = {
        "x": worst,
        "Pw": float(lhs[worst]),
        "bound": float(rhs[worst]),
        "in_C": worst in cert.C,
    }
    if passed:
        witness["global_constant"] = cert.eta / cert.r1
        detail = f"drift holds; tightest at x={worst}"
    else:
        detail = f"Pw({worst}) = {lhs[worst]:.12g} > {rhs[worst]:.12g}"
    return CheckResult("drift", passed, witness, detail)


@dataclass
class HittingBracket:
    """lower <= E_x[r^σ_C] <= upper on the window (1 on C)."""

    space: StateSpace
    r: float
    C: frozenset[int]
    lower: FloatArray
    upper: FloatArray
    iterations: int = 0

    def at(self, x: int) -> Interval:
        return Interval.outward(float(self.lower[x]), float(self.upper[x]))

    @property
    def width(self) -> float:
        return float(np.max(self.upper - self.lower))

    def upper_weight(self, tail_ratio: Optional[float] = None) -> WeightFn:
        if not np.all(np.isfinite(self.upper)):
            raise Divergent("upper bracket is unbounded; pass a reference weight")
        return WeightFn(self.space, np.maximum(self.upper, 1.0), tail_ratio)


def _neumann(
    A: sp.csr_matrix,
    b: FloatArray,
    start: FloatArray,
    tol: float,
    max_iter: int,
    damping: float,
    descending: bool,
) -> tuple[FloatArray, int]:
    """Iterate u <- (1-θ)u + θ(Au + b) from `start`.

    From 0 the iterates increase to the minimal solution; from a
    supersolution they decrease and stay supersolutions.
    """
    u = start.copy()
    if u.size == 0:
        return u, 0
    half_step: Optional[float] = None
    step = math.inf
    for it in range(1, max_iter + 1):
        nxt = A @ u + b
        if damping < 1.0:
            nxt = (1.0 - damping) * u + damping * nxt
        if descending:
            nxt = np.minimum(nxt, u)
        if not np.all(np.isfinite(nxt)) or float(nxt.max()) > DIVERGENCE_LIMIT:
            raise Divergent(f"Neumann iterates blew up after {it} iterations")
        step = float(np.max(np.abs(nxt - u)))
        u = nxt
        if step <= tol * max(1.0, float(np.max(np.abs(u)))):
            return u, it
        if it == max_iter // 2:
            half_step = step
    if not descending and half_step is not None and step >= half_step:
        raise Divergent(
            f"Neumann increments stopped decreasing ({half_step:.3g} -> {step:.3g})"
        )
    logger.debug("Neumann iteration hit max_iter=%d with step %.3g", max_iter, step)
    return u, max_iter


class _DirectSolve(NamedTuple):
    s: FloatArray
    y: FloatArray
    margin: FloatArray
    defect: FloatArray


def _direct_solve(A: sp.csr_matrix, b: FloatArray) -> _DirectSolve:
    """Solve (I - A)s = b and (I - A)y = |s| directly.

    The solution is only a candidate: callers shift s along y and keep
    the result after checking the sub/supersolution inequality. A
    positive margin y - Ay certifies r(A) < 1 (Collatz-Wielandt).
    """
    n = b.size
    system = (sp.identity(n, format="csc") - A).tocsc()
    try:
        s = np.asarray(spla.spsolve(system, b)).ravel()
        g = np.maximum(np.abs(s), np.finfo(np.float64).tiny)
        y = np.asarray(spla.spsolve(system, g)).ravel()
    except (RuntimeError, ValueError) as e:
        raise Divergent(f"hitting system is singular: {e}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))) or np.any(y <= 0):
        raise Divergent("r P restricted to C^c has spectral radius >= 1")
    margin = y - A @ y
    if np.any(margin <= 0):
        raise Divergent("could not certify contraction of r P on C^c")
    return _DirectSolve(s, y, margin, A @ s + b - s)


def _shifted_candidate(
    A: sp.csr_matrix, b: FloatArray, solve: _DirectSolve, upper: bool
) -> Optional[FloatArray]:
    """s ± γy, the smallest tried γ giving a verified super/subsolution."""
    sign = 1.0 if upper else -1.0
    gamma = max(float(np.max(sign * solve.defect / solve.margin)), 0.0)
    floor = 1e-15 * float(np.max(np.abs(solve.s) / solve.y))
    for _ in range(64):
        v = solve.s + sign * gamma * solve.y
        if not upper:
            v = np.maximum(v, 0.0)
        Fv = A @ v + b
        if (upper and np.all(Fv <= v)) or (not upper and np.all(Fv >= v)):
            return v
        gamma = 2.0 * gamma + floor
    return None


def hitting_bracket(
    P: Kernel,
    C: Iterable[int],
    r: float,
    reference_w: Optional[WeightFn] = None,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> HittingBracket:
    """Two-sided bracket of E_x[r^σ_C] for r >= 0.

    Args:
        P: Positive kernel (usually Markov)
        C: Target set, σ_C = inf{n >= 0: X_n in C}
        r: Generating function argument
        reference_w: Weight with E_y[r^σ] <= w(y) off C (a verified drift
            weight at some r1 >= r). It bounds exits from the window and
            seeds the upper iteration.
        tol: Relative stopping tolerance on iterate increments
        max_iter: Iteration cap; capped iterates are still valid bounds
        damping: Relaxation θ in (0, 1]

    Raises:
        Divergent: If the iteration does not contract.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if P.kind is not KernelKind.POSITIVE:
        raise ValueError("hitting_bracket needs a positive kernel")
    n = P.n_states
    c_set = frozenset(int(x) for x in C)
    in_c = _state_mask(n, c_set)
    d_idx = np.flatnonzero(~in_c)
    c_idx = np.flatnonzero(in_c)
    if d_idx.size == 0:
        return HittingBracket(P.space, r, c_set, np.ones(n), np.ones(n), 0)

    A = sp.csr_matrix(r * P.matrix[d_idx][:, d_idx])
    b_lo = r * np.asarray(P.matrix[d_idx][:, c_idx].sum(axis=1)).ravel()
    exits = P.tails[d_idx]
    has_exits = bool(np.any(exits > 0))

    lower_d, it_lo = _neumann(A, b_lo, np.zeros(d_idx.size), tol, max_iter, damping, False)
    direct: Optional[_DirectSolve] = None
    if it_lo >= max_iter:
        # stalled near the convergence radius
        try:
            direct = _direct_solve(A, b_lo)
        except Divergent as e:
            logger.debug("direct solve rejected at r=%.9g: %s", r, e)
        else:
            candidate = _shifted_candidate(A, b_lo, direct, upper=False)
            if candidate is not None:
                lower_d = np.maximum(lower_d, candidate)

    b_hi = b_lo
    start: Optional[FloatArray] = None
    if reference_w is not None:
        P.space.check_same(reference_w.space)
        w_out = _weight_out(reference_w, P.tail_reach)
        if not has_exits or math.isfinite(w_out):
            if has_exits:
                b_hi = b_lo + r * exits * w_out
            seed = reference_w.values[d_idx]
            if np.all(A @ seed + b_hi <= seed * (1.0 + CHECK_RTOL)):
                start = seed
            else:
                logger.debug("reference weight is not a supersolution at r=%.9g", r)
    if start is None and not has_exits:
        direct = _direct_solve(A, b_lo) if direct is None else direct
        start = _shifted_candidate(A, b_lo, direct, upper=True)
        if start is None:
            raise Divergent(f"no supersolution found for the hitting system at r={r}")

    it_hi = 0
    if start is None:
        upper_d = np.full(d_idx.size, math.inf)
    else:
        upper_d, it_hi = _neumann(A, b_hi, start, tol, max_iter, damping, True)

    lower = np.ones(n)
    upper = np.ones(n)
    lower[d_idx] = lower_d
    upper[d_idx] = np.maximum(upper_d, lower_d)
    logger.debug(
        "hitting bracket r=%.9g: %d/%d iterations, width %.3g",
        r, it_lo, it_hi, float(np.max(upper - lower)) if n else 0.0,
    )
    return HittingBracket(P.space, r, c_set, lower, upper, max(it_lo, it_hi))


def minimal_drift(
    P: Kernel,
    C: Iterable[int],
    r1: float,
    reference_w: Optional[WeightFn] = None,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> HittingBracket:
    """Bracket of the minimal drift weight w1(x) = E_x[r1^σ_C]."""
    return hitting_bracket(P, C, r1, reference_w, tol, max_iter, damping)


def return_gf(
    P: Kernel,
    C: Iterable[int],
    r: float,
    reference_w: Optional[WeightFn] = None,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> HittingBracket:
    """Bracket of E_x[r^τ_C] with τ_C = inf{n >= 1: X_n in C}, every x."""
    hit = hitting_bracket(P, C, r, reference_w, tol, max_iter)
    lower = r * np.asarray(P.matrix @ hit.lower).ravel()
    finite_upper = np.where(np.isfinite(hit.upper), hit.upper, 0.0)
    upper = r * np.asarray(P.matrix @ finite_upper).ravel()
    reaches_inf = np.asarray(P.matrix @ (~np.isfinite(hit.upper)).astype(float)).ravel() > 0
    if np.any(P.tails > 0):
        w_out = _weight_out(reference_w, P.tail_reach) if reference_w is not None else math.inf
        with np.errstate(invalid="ignore"):
            upper = upper + np.where(P.tails > 0, r * P.tails * w_out, 0.0)
    upper = np.where(reaches_inf, math.inf, upper)
    return HittingBracket(P.space, r, hit.C, lower, np.maximum(upper, lower), hit.iterations)


def minimal_drift_certificate(
    P: Kernel,
    C: Iterable[int],
    r1: float,
    reference_w: Optional[WeightFn] = None,
    tail_ratio: Optional[float] = None,
) -> DriftCertificate:
    """Drift certificate with w = upper bracket of E_x[r1^σ_C].

    eta = r1 max_{x in C} (Pw)(x), so the inequality on C holds by
    construction and off C it is the supersolution property of w.
    """
    bracket = minimal_drift(P, C, r1, reference_w)
    if not np.all(np.isfinite(bracket.upper)):
        raise Divergent("minimal drift weight is unbounded on the window")
    if tail_ratio is None and reference_w is not None:
        tail_ratio = reference_w.tail_ratio
    w = WeightFn(P.space, np.maximum(bracket.upper, 1.0), tail_ratio)
    pw = _apply_weight(P, w)
    c_set = frozenset(int(x) for x in C)
    eta = r1 * float(max(pw[x] for x in c_set))
    return DriftCertificate(c_set, w, r1, eta)


def verify_minorization(
    P: Kernel,
    cert: MinorizationCertificate,
    w: Optional[WeightFn] = None,
    density_cutoff: float = DEFAULT_DENSITY_CUTOFF,
    ui_tolerance: float = DEFAULT_UI_TOLERANCE,
    tol: float = CHECK_RTOL,
) -> CheckResult:
    """Check T rows on C sum to 1, P >= bT on C, and α^{(w)} is UI."""
    P.space.check_same(cert.nu.space)
    density = DensityKernel(cert.nu, cert.alpha, w)
    t_kernel = density.to_kernel()
    c_rows = np.array(sorted(cert.C))
    mass = np.asarray(t_kernel.matrix[c_rows].sum(axis=1)).ravel()
    bad = np.flatnonzero(np.abs(mass - 1.0) > tol)
    if bad.size:
        x = int(c_rows[bad[0]])
        return CheckResult(
            "minorization",
            False,
            {"x": x, "row_mass": float(mass[bad[0]])},
            f"T({x}, E) = {mass[bad[0]]:.12g}, T must be Markov on C",
            NotMarkov,
        )

    diff = (P.matrix[c_rows] - cert.b * t_kernel.matrix[c_rows]).tocoo()
    if diff.nnz and float(diff.data.min()) < -tol:
        j = int(np.argmin(diff.data))
        x, y = int(c_rows[diff.row[j]]), int(diff.col[j])
        value = float(diff.data[j])
        return CheckResult(
            "minorization",
            False,
            {"x": x, "y": y, "excess": value},
            f"P({x}, {y}) < b T({x}, {y}) by {-value:.6g}",
            NotDominated,
        )

    tail = ui_tail(density, density_cutoff)
    if tail > ui_tolerance:
        return CheckResult(
            "minorization",
            False,
            {"ui_tail": tail, "cutoff": density_cutoff},
            f"densities not uniformly integrable: ui_tail={tail:.6g}",
            NotUniformlyIntegrable,
        )
    return CheckResult(
        "minorization",
        True,
        {"b": cert.b, "ui_tail": tail, "C": sorted(cert.C)},
        "P >= b T on C",
    )


def split_kernel(P: Kernel, cert: MinorizationCertificate) -> Kernel:
    """The split kernel P0.

    Off C, P0 = P. On C, P0 = (P - bT)/(1 - b) when b < 1 and δ_x when
    b = 1.
    """
    P.space.check_same(cert.nu.space)
    n = P.n_states
    in_c = cert.in_c()
    t_matrix = cert.density.to_kernel().matrix
    keep_off = sp.diags((~in_c).astype(np.float64))
    on_c = sp.diags(in_c.astype(np.float64))
    if cert.b >= 1.0:
        rows_c = on_c @ sp.identity(n, format="csr")
        tails = np.where(in_c, 0.0, P.tails)
    else:
        rows_c = on_c @ (P.matrix - cert.b * t_matrix) / (1.0 - cert.b)
        tails = np.where(in_c, P.tails / (1.0 - cert.b), P.tails)
    matrix = sp.csr_matrix(keep_off @ P.matrix + rows_c)
    # entries within rounding of zero after removing bT
    matrix.data = np.where((matrix.data < 0) & (matrix.data > -CHECK_RTOL), 0.0, matrix.data)
    matrix.eliminate_zeros()
    return Kernel(P.space, matrix, tails, KernelKind.POSITIVE, True, P.tail_reach)


def h_of_r(
    P0: Kernel,
    P: Kernel,
    cert: MinorizationCertificate,
    r: float,
    reference_w: Optional[WeightFn] = None,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> Interval:
    """h(r) = sup_{x in C} Σ_y P0(x, y) r E_y[r^σ_C].

    With b = 1 the chain P0 stays put on C and h(r) = r exactly.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if cert.b >= 1.0:
        return Interval.point(r)
    bracket = hitting_bracket(P, cert.C, r, reference_w, tol, max_iter, damping)
    c_rows = np.array(sorted(cert.C))
    sub = P0.matrix[c_rows]
    lo = r * np.asarray(sub @ bracket.lower).ravel()
    finite = np.isfinite(bracket.upper)
    hi = r * np.asarray(sub @ np.where(finite, bracket.upper, 0.0)).ravel()
    unbounded = np.asarray(sub @ (~finite).astype(float)).ravel() > 0
    tails = P0.tails[c_rows]
    if np.any(tails > 0):
        w_out = _weight_out(reference_w, P.tail_reach) if reference_w is not None else math.inf
        unbounded |= (tails > 0) & math.isinf(w_out)
        if math.isfinite(w_out):
            hi = hi + r * tails * w_out
    if np.any(unbounded):
        return Interval.unbounded(float(lo.max()))
    return Interval.outward_nonneg(float(lo.max()), float(max(hi.max(), lo.max())))


def compute_rb(
    P0: Kernel,
    P: Kernel,
    cert: MinorizationCertificate,
    r1: float,
    reference_w: Optional[WeightFn] = None,
    steps: int = DEFAULT_BISECTION_STEPS,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> Interval:
    """Bracket r_b = sup{r in [0, r1]: h(r) < 1/(1-b)} by bisection.

    h is a supremum of power series with nonnegative coefficients, hence
    nondecreasing, so bisection on interval values of h is sound.

    Raises:
        Inconclusive: If no r > 1 is certified below the threshold.
    """
    if r1 <= 1.0:
        raise ValueError(f"r1 must be > 1, got {r1}")
    if cert.b >= 1.0:
        return Interval.point(r1)
    threshold = 1.0 / (1.0 - cert.b)

    def h_at(r: float) -> Interval:
        try:
            return h_of_r(P0, P, cert, r, reference_w, tol, max_iter, damping)
        except Divergent:
            return Interval(math.inf, math.inf)

    top = h_at(r1)
    if top.hi < threshold:
        return Interval.point(r1)
    lo, hi = 1.0, r1
    for step in range(steps):
        mid = 0.5 * (lo + hi)
        value = h_at(mid)
        logger.debug("r_b bisection %d: h(%.12g) = %s vs %.12g", step, mid, value, threshold)
        if value.hi < threshold:
            lo = mid
        elif value.lo >= threshold:
            hi = mid
        else:
            break
    if lo <= 1.0:
        window = 2 * P.space.size if P.space.is_windowed else None
        raise Inconclusive(
            ERROR_INCONCLUSIVE.format(what="r_b", interval=Interval(lo, hi), window=window),
            suggested_window=window,
        )
    return Interval(lo, hi)


def renewal_identity(
    P: Kernel,
    cert: MinorizationCertificate,
    x: int,
    n: int,
    max_paths: float = DEFAULT_ENUMERATION_LIMIT,
) -> tuple[float, float]:
    """(S^n 1)(x) and E_x[(1-b)^{N_n}] under P0 by path enumeration.

    S = P - b 1_C T and N_n counts visits to C among Z_0..Z_{n-1}.

    Raises:
        SizeLimit: If the number of enumerated paths exceeds max_paths.
    """
    if P.space.is_windowed:
        raise ValueError("renewal_identity enumerates paths on finite spaces only")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    in_c = cert.in_c()
    t_dense = cert.density.to_kernel().to_dense()
    s_dense = P.to_dense() - cert.b * in_c[:, None] * t_dense
    lhs_vec = np.ones(P.n_states)
    for _ in range(n):
        lhs_vec = s_dense @ lhs_vec
    lhs = float(lhs_vec[x])

    P0 = split_kernel(P, cert)
    indptr, indices, data = P0.matrix.indptr, P0.matrix.indices, P0.matrix.data
    fanout = np.diff(indptr)
    states = np.array([x], dtype=np.int64)
    weights = np.array([1.0])
    factor = 1.0 - cert.b
    for _ in range(n):
        weights = np.where(in_c[states], weights * factor, weights)
        counts = fanout[states]
        total = int(counts.sum())
        if total > max_paths:
            raise SizeLimit(
                ERROR_SIZE_LIMIT.format(what="renewal path enumeration", size=total, limit=int(max_paths))
            )
        parent = np.repeat(np.arange(states.size), counts)
        offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        pos = indptr[states][parent] + offsets
        states = indices[pos].astype(np.int64)
        weights = weights[parent] * data[pos]
    rhs = float(weights.sum())
    return lhs, rhs


@dataclass
class GFSuite:
    """Generating-function samples at one r with their inequality checks."""

    r: float
    h: Interval
    H: FloatArray
    L: FloatArray
    G_series: tuple[FloatArray, FloatArray]
    G_renewal: tuple[FloatArray, FloatArray]
    G_w: tuple[FloatArray, FloatArray]
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values())


def _series_with_remainder(
    S: FloatArray, r: float, n_max: int
) -> tuple[FloatArray, FloatArray]:
    """Σ_{n<=n_max} r^n S^n 1 and that sum plus a block-norm remainder."""
    n_states = S.shape[0]
    term = np.ones(n_states)
    total = np.zeros(n_states)
    norms = []
    block = np.identity(n_states)
    for k in range(n_max + 1):
        total += (r**k) * term
        norms.append((r**k) * float(np.max(np.abs(block).sum(axis=1))))
        term = S @ term
        block = block @ S
    # S^{N j + i} <= ∥S^N∥^j ∥S^i∥ with N = n_max + 1
    q = (r ** (n_max + 1)) * float(np.max(np.abs(block).sum(axis=1)))
    if q >= 1.0:
        return total, np.full(n_states, math.inf)
    remainder = q / (1.0 - q) * sum(norms)
    return total, total + remainder


def gf_suite(
    P: Kernel,
    cert: MinorizationCertificate,
    drift: DriftCertificate,
    r: float,
    k_max: int = 60,
    n_max: int = 200,
    rtol: float = 1e-10,
) -> GFSuite:
    """H_k, L_k, G and G_w at r on a small finite chain, with checks.

    H_k^x(r) = E_x[r^{ρ_k}] for the successive visit times ρ_k of the P0
    chain to C (ρ_0 = σ_C). G^x(r) = Σ_n r^n S^n(x, E) is computed both as
    a power series and through the renewal sum Σ_k (1-b)^k L_k^x(r).
    """
    if P.space.is_windowed:
        raise ValueError("gf_suite works on finite spaces")
    if r <= 0 or r == 1.0:
        raise ValueError(f"gf_suite needs r > 0 and r != 1, got {r}")
    if r > drift.r1:
        raise ValueError(f"r = {r} exceeds r1 = {drift.r1}")
    n = P.n_states
    b = cert.b
    P0 = split_kernel(P, cert)
    p0 = P0.to_dense()
    in_c = cert.in_c()
    c_idx = np.flatnonzero(in_c)
    d_idx = np.flatnonzero(~in_c)
    w = drift.w.values

    # entry law E[x, c] = E_x[r^σ; Z_σ = c]
    entry = np.zeros((n, c_idx.size))
    entry[c_idx, np.arange(c_idx.size)] = 1.0
    if d_idx.size:
        a = np.identity(d_idx.size) - r * p0[np.ix_(d_idx, d_idx)]
        entry[d_idx] = scipy.linalg.solve(a, r * p0[np.ix_(d_idx, c_idx)])
        if np.any(entry < -1e-12):
            raise Divergent(f"hitting generating function diverges at r={r}")
    ret = r * (p0[np.ix_(c_idx, c_idx)] + p0[np.ix_(c_idx, d_idx)] @ entry[d_idx])
    h_value = float(ret.sum(axis=1).max())
    h = Interval.outward_nonneg(h_value, h_value)

    H = np.zeros((k_max + 1, n))
    vec = np.ones(c_idx.size)
    for k in range(k_max + 1):
        H[k] = entry @ vec
        vec = ret @ vec
    L = np.zeros((k_max + 1, n))
    L[0] = (1.0 - r * H[0]) / (1.0 - r)
    L[1:] = r * (H[:-1] - H[1:]) / (1.0 - r)

    factor = (1.0 - b) * h_value
    renewal = sum((1.0 - b) ** k * L[k] for k in range(k_max + 1))
    if factor < 1.0:
        scale = r * max(1.0, 1.0 / h_value) / abs(1.0 - r)
        remainder = scale * H[0] * factor ** (k_max + 1) / (1.0 - factor)
    else:
        remainder = np.full(n, math.inf)
    G_renewal = (renewal, renewal + remainder)

    s_dense = P.to_dense() - b * in_c[:, None] * cert.density.to_kernel().to_dense()
    G_series = _series_with_remainder(s_dense, r, n_max)
    s_w = (s_dense / w[:, None]) * w[None, :]
    G_w = _series_with_remainder(s_w, r, n_max)

    profile = RenewalProfile([(r, h)], Interval.point(drift.r1), drift.r1, drift.eta, b)
    checks: dict[str, bool] = {}
    bound_h = w[None, :] * (h.hi ** np.arange(k_max + 1))[:, None]
    checks["hitting_moments"] = bool(np.all(H <= bound_h * (1.0 + rtol) + rtol))
    g_lo = np.maximum(G_series[0], G_renewal[0])
    g_hi = np.minimum(G_series[1], G_renewal[1])
    checks["renewal_series"] = bool(np.all(g_lo <= g_hi * (1.0 + rtol) + rtol))
    lhs = (1.0 - r / drift.r1) * G_w[0]
    rhs = 1.0 + (drift.eta / drift.r1) * r * G_series[1] / w
    checks["weighted_series"] = bool(np.all(lhs <= rhs * (1.0 + rtol)))
    if b < 1.0 and r > 1.0:
        m_r = profile.m(r)
        checks["h_growth"] = bool(0.0 <= h.hi - 1.0 + rtol and h.lo - 1.0 <= (r - 1.0) * m_r)
    if factor < 1.0 and b < 1.0:
        big_m = profile.M(r, h)
        checks["G_bound"] = bool(np.max(G_series[0] / w) <= big_m.hi * (1.0 + rtol))
        checks["G_w_bound"] = bool(np.max(G_w[0]) <= profile.Mw(r, h).hi * (1.0 + rtol))
    logger.debug("gf_suite r=%.6g h=%.12g checks=%s", r, h_value, checks)
    return GFSuite(r, h, H, L, G_series, G_renewal, G_w, checks)


def level_set_threshold(rho: float, zeta: float, rho_bar: float) -> float:
    """t0 solving rho + zeta/((1 - rho) t0) = rho_bar."""
    if not 0.0 <= rho < rho_bar < 1.0:
        raise ValueError(f"need 0 <= rho < rho_bar < 1, got {rho}, {rho_bar}")
    return zeta / ((1.0 - rho) * (rho_bar - rho))


def return_horizon(t: float, rho: float) -> int:
    """k_t = min{k >= 0: t rho^{k+1} <= 1/2}."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    k = 0
    while t * rho ** (k + 1) > 0.5:
        k += 1
    return k


@dataclass
class FosterResult:
    """Certificates for P^n (or an averaged kernel) on a level set C_t."""

    kernel: Kernel
    n: int
    averaged: bool
    t: float
    k_t: int
    drift: DriftCertificate
    minorization: MinorizationCertificate


def _check_small_set(P: Kernel, C: frozenset[int], m: int, b: float, nu: AtomicMeasure) -> None:
    pm = power(P, m)
    rows = np.array(sorted(C))
    diff = (pm.matrix[rows] - b * sp.csr_matrix(np.tile(np.real(nu.to_dense()), (rows.size, 1)))).tocoo()
    if diff.nnz and float(diff.data.min()) < -CHECK_RTOL:
        j = int(np.argmin(diff.data))
        x, y = int(rows[diff.row[j]]), int(diff.col[j])
        raise NotFound(
            f"small-set witness fails: P^{m}({x}, {y}) < b nu({y})",
            obstruction=f"small set minorization at ({x}, {y})",
        )


def foster_to_small(
    P: Kernel,
    w: WeightFn,
    rho: float,
    zeta: float,
    C: Iterable[int],
    m: int,
    b: float,
    nu: AtomicMeasure,
    rho_bar: Optional[float] = None,
    t: Optional[float] = None,
) -> FosterResult:
    """Turn Pw <= rho w + zeta 1_C with a small set C into certificates.

    With m = 1 the certificates are direct: r1 = 1/rho and
    eta = sup_C w + zeta/rho. Otherwise a level set C_t = {w <= t} with
    t >= t0 is used, where every state hits C within k_t steps with
    probability >= 1/2; a single power P^n in [m, m + k_t] is searched
    for the minorization b/(2(k_t+1)) nu, and the averaged kernel
    (1/(k_t+1)) Σ_j P^{j+m} is used when none works.

    Raises:
        NotFound: If the Foster condition or the small set fails.
    """
    if not 0.0 < rho < 1.0 or zeta < 0:
        raise ValueError(f"need 0 < rho < 1 and zeta >= 0, got {rho}, {zeta}")
    c_set = frozenset(int(x) for x in C)
    in_c = _state_mask(P.n_states, c_set)
    pw = _apply_weight(P, w)
    bound = rho * w.values + zeta * in_c
    excess = pw - bound
    if np.any(excess > CHECK_RTOL * np.maximum(bound, 1.0)):
        x = int(np.argmax(excess))
        raise NotFound(
            f"Foster condition fails at x={x}: Pw = {pw[x]:.12g} > {bound[x]:.12g}",
            obstruction=f"drift at x={x}",
        )
    _check_small_set(P, c_set, m, b, nu)

    if m == 1:
        beta = float(max(w.values[x] for x in c_set))
        drift = DriftCertificate(c_set, w, 1.0 / rho, beta + zeta / rho)
        minor = MinorizationCertificate.constant(c_set, b, nu)
        return FosterResult(P, 1, False, beta, 0, drift, minor)

    rho_bar = 0.5 * (1.0 + rho) if rho_bar is None else rho_bar
    t0 = level_set_threshold(rho, zeta, rho_bar)
    level = max(t0, 1.0) if t is None else t
    if level < t0:
        raise ValueError(f"t = {level} is below t0 = {t0}")
    c_t = frozenset(int(x) for x in np.flatnonzero(w.values <= level))
    if not c_t:
        raise NotFound(f"level set {{w <= {level}}} is empty", obstruction="empty level set")
    k_t = return_horizon(level, rho)
    zeta_t = rho * level + zeta / (1.0 - rho)
    drift_cert = DriftCertificate(c_t, w, 1.0 / rho_bar, zeta_t / rho_bar)
    constant = b / (2.0 * (k_t + 1))
    nu_dense = np.real(nu.to_dense())
    rows = np.array(sorted(c_t))

    current = power(P, m)
    powers = [current]
    for j in range(k_t + 1):
        if j:
            current = compose(current, P)
            powers.append(current)
        dense = current.matrix[rows].toarray()
        if np.all(dense - constant * nu_dense[None, :] >= -CHECK_RTOL):
            minor = MinorizationCertificate.constant(c_t, constant, nu)
            logger.debug("level-set minorization found at power %d", m + j)
            return FosterResult(current, m + j, False, level, k_t, drift_cert, minor)

    avg_matrix = sum((p.matrix for p in powers[1:]), powers[0].matrix) / (k_t + 1)
    avg_tails = sum((p.tails for p in powers[1:]), powers[0].tails) / (k_t + 1)
    averaged = Kernel(
        P.space,
        sp.csr_matrix(avg_matrix),
        avg_tails,
        KernelKind.POSITIVE,
        P.markov,
        powers[-1].tail_reach,
    )
    minor = MinorizationCertificate.constant(c_t, constant, nu)
    check = verify_minorization(averaged, minor)
    if not check.passed:
        raise NotFound(
            f"averaged kernel minorization fails: {check.detail}",
            obstruction="petite set minorization",
        )
    logger.debug("level-set minorization uses the averaged kernel over k_t=%d", k_t)
    return FosterResult(averaged, m + k_t, True, level, k_t, drift_cert, minor)


@dataclass
class SynthesisResult:
    n: int
    kernel: Kernel
    rho: float
    period: int
    drift: DriftCertificate
    minorization: MinorizationCertificate


def synthesize_certificates(
    P: Kernel,
    w: WeightFn,
    t: float,
    b: float,
    n_cap: int = DEFAULT_N_CAP,
    rho_margin: float = DEFAULT_RHO_MARGIN,
    max_states: int = 1000,
) -> SynthesisResult:
    """Search n for drift and minorization certificates of P^n on C_t.

    ν is the normalized average of the rows of P^n over C_t and
    α = α'/T(x, E) with α' the density of P^n(x, .) against ν. The drift
    uses rho = subdominant modulus + rho_margin, r1 = rho^{-n} and
    eta = r1 max_{C_t} P^n w. Candidate n run over multiples of the
    period.

    Raises:
        NotFound: With the obstruction when no n <= n_cap works.
    """
    from .ergodic import period_detect
    from .spectrum import eigen_oracle

    if P.space.is_windowed:
        raise ValueError("synthesize_certificates works on finite spaces")
    if not P.markov:
        raise NotMarkov("synthesize_certificates needs a Markov kernel")
    if not 0.0 < b <= 1.0:
        raise ValueError(f"b must lie in (0, 1], got {b}")
    c_t = frozenset(int(x) for x in np.flatnonzero(w.values <= t))
    if not c_t:
        raise NotFound(f"C_t = {{w <= {t}}} is empty", obstruction="empty level set")
    rows = np.array(sorted(c_t))
    in_c = _state_mask(P.n_states, c_t)

    spectrum = eigen_oracle(P, max_states=max_states)
    inner = [abs(v) for v in spectrum if abs(v) < 1.0 - 1e-9]
    rho = min((max(inner) if inner else 0.0) + rho_margin, 1.0 - 1e-12)
    d = period_detect(P, max_states=max_states)

    obstruction = "no candidate power"
    for n in range(d, n_cap + 1, d):
        pn = power(P, n)
        dense = pn.to_dense()
        nu_vec = dense[rows].mean(axis=0)
        nu_vec = nu_vec / nu_vec.sum()
        support = nu_vec > 0
        mass = dense[np.ix_(rows, np.flatnonzero(support))].sum(axis=1)
        if np.any(mass < b):
            x = int(rows[int(np.argmin(mass))])
            obstruction = f"n={n}: T-row mass {mass.min():.6g} < b at x={x}"
            continue
        alpha = np.ones_like(dense)
        alpha[:, ~support] = 0.0
        inv = np.where(support, 1.0 / np.where(support, nu_vec, 1.0), 0.0)
        alpha[rows] = dense[rows] * inv[None, :] / mass[:, None]
        nu = AtomicMeasure.from_dense(P.space, nu_vec)
        minor = MinorizationCertificate(c_t, b, nu, sp.csr_matrix(alpha))

        r1 = rho ** (-n)
        pw = _apply_weight(pn, w)
        eta = r1 * float(pw[rows].max())
        drift = DriftCertificate(c_t, w, r1, eta)
        check = verify_drift(pn, drift)
        if not check.passed:
            obstruction = f"n={n}: drift fails at x={check.witness['x']}"
            continue
        minor_check = verify_minorization(pn, minor, w)
        if not minor_check.passed:
            obstruction = f"n={n}: {minor_check.detail}"
            continue
        logger.debug("synthesized certificates at n=%d (rho=%.6g, period=%d)", n, rho, d)
        return SynthesisResult(n, pn, rho, d, drift, minor)
    if d > 1 and not np.all(in_c):
        obstruction += f"; period {d}, C_t may miss a cyclic class"
    raise NotFound(f"no certificate found for n <= {n_cap}", obstruction=obstruction)


class CertifiedBound(NamedTuple):
    r_b: Interval
    bound: Interval
    profile: RenewalProfile


def renewal_profile(
    P: Kernel,
    drift: DriftCertificate,
    minor: MinorizationCertificate,
    samples: Optional[Sequence[float]] = None,
    reference_w: Optional[WeightFn] = None,
    steps: int = DEFAULT_BISECTION_STEPS,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> RenewalProfile:
    """h at sampled r in [1, r1] together with the r_b bracket.

    tol, max_iter and damping drive the Neumann iterations behind every
    hitting bracket.
    """
    P0 = split_kernel(P, minor)
    ref = drift.w if reference_w is None else reference_w
    grid = list(samples) if samples is not None else list(np.linspace(1.0, drift.r1, 9))
    h_samples = []
    for r in grid:
        try:
            h_samples.append((float(r), h_of_r(P0, P, minor, float(r), ref, tol, max_iter, damping)))
        except Divergent:
            h_samples.append((float(r), Interval(math.inf, math.inf)))
    r_b = compute_rb(P0, P, minor, drift.r1, ref, steps, tol, max_iter, damping)
    return RenewalProfile(h_samples, r_b, drift.r1, drift.eta, minor.b)


def certify_bound(
    P: Kernel,
    drift: DriftCertificate,
    minor: MinorizationCertificate,
    steps: int = DEFAULT_BISECTION_STEPS,
    tol: float = DEFAULT_NEUMANN_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    damping: float = 1.0,
) -> CertifiedBound:
    """Verify both certificates and return r_b and the bound r_e^w <= 1/r_b.

    Raises:
        QCertError: The error type of the first failed check.
    """
    verify_drift(P, drift).raise_if_failed()
    verify_minorization(P, minor, drift.w).raise_if_failed()
    profile = renewal_profile(P, drift, minor, steps=steps, tol=tol, max_iter=max_iter, damping=damping)
    bound = Interval.outward(1.0 / profile.r_b.hi, 1.0 / profile.r_b.lo)
    return CertifiedBound(profile.r_b, bound, profile)


__all__ = [
    "CertifiedBound",
    "FosterResult",
    "GFSuite",
    "HittingBracket",
    "SynthesisResult",
    "certify_bound",
    "compute_rb",
    "foster_to_small",
    "gf_suite",
    "h_of_r",
    "hitting_bracket",
    "level_set_threshold",
    "minimal_drift",
    "minimal_drift_certificate",
    "renewal_identity",
    "renewal_profile",
    "return_gf",
    "return_horizon",
    "split_kernel",
    "synthesize_certificates",
    "verify_drift",
    "verify_minorization",
]
