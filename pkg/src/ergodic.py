"""Stationary laws, periods and geometric decay towards the peripheral limit."""

import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .errors import EnvelopeViolated, NoConvergence, NotMarkov
from .models import (
    AtomicMeasure,
    ErgodicReport,
    FloatArray,
    Kernel,
    KernelKind,
    StateSpace,
    WeightFn,
)
from .spectrum import DEFAULT_ORACLE_MAX_STATES, eigen_oracle

logger = logging.getLogger(__name__)

DEFAULT_KAPPA_MARGIN = 0.01
DEFAULT_N_BURN = 10
DEFAULT_N_MAX = 200
STATIONARY_TOL = 1e-10
PERIPHERAL_TOL = 1e-9
# Residuals below this are rounding noise
RESIDUAL_FLOOR = 1e-12


class Stationary(NamedTuple):
    pi: AtomicMeasure
    unique: Optional[bool]
    residual: float


def _folded(P: Kernel) -> npt.NDArray[np.float64]:
    """Dense window matrix with each row's tail mass put back on its diagonal."""
    dense = np.asarray(P.to_dense(), dtype=np.float64)
    dense[np.diag_indices_from(dense)] += P.tails
    return dense


def _gth(matrix: npt.NDArray[np.float64]) -> Optional[FloatArray]:
    """Grassmann-Taksar-Heyman elimination for a row-stochastic matrix.

    Returns None when a pivot vanishes (the chain is reducible).
    """
    a = matrix.copy()
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        if s <= 0.0:
            return None
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
    return pi / pi.sum()


def _eig_stationary(matrix: npt.NDArray[np.float64]) -> FloatArray:
    values, vectors = np.linalg.eig(matrix.T)
    j = int(np.argmin(np.abs(values - 1.0)))
    v = np.real(vectors[:, j])
    v = v / v.sum()
    return np.where(np.abs(v) < 1e-15, 0.0, v)


def stationary(
    P: Kernel,
    tol: float = STATIONARY_TOL,
    max_states: int = DEFAULT_ORACLE_MAX_STATES,
) -> Stationary:
    """Invariant probability π with πP = π on the window.

    Tail mass of windowed kernels is folded back onto the diagonal. GTH
    elimination is tried first and the left eigenvector for eigenvalue 1
    is the fallback. `unique` comes from the multiplicity of eigenvalue 1
    (None when the window exceeds max_states).

    Raises:
        NoConvergence: If the residual ∥πP - π∥ stays above tol.
    """
    if not P.markov:
        raise NotMarkov("stationary needs a Markov kernel")
    matrix = _folded(P)
    pi = _gth(matrix)
    if pi is None or float(np.max(np.abs(pi @ matrix - pi))) > tol:
        logger.debug("GTH elimination unusable, falling back to eigenvectors")
        pi = _eig_stationary(matrix)
    residual = float(np.max(np.abs(pi @ matrix - pi)))
    if residual > tol or np.any(pi < -tol):
        raise NoConvergence(f"stationary residual {residual:.3g} exceeds {tol:.3g}")
    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()

    unique: Optional[bool] = None
    if P.n_states <= max_states:
        folded = Kernel(P.space, sp.csr_matrix(matrix), np.zeros(P.n_states))
        ones = sum(1 for v in eigen_oracle(folded, max_states=max_states) if abs(v - 1.0) < PERIPHERAL_TOL)
        unique = ones == 1
    return Stationary(AtomicMeasure.from_dense(P.space, pi), unique, residual)


def period_detect(P: Kernel, max_states: int = DEFAULT_ORACLE_MAX_STATES) -> int:
    """Number of eigenvalues on the unit circle (the period when P is irreducible)."""
    if P.space.is_windowed:
        raise ValueError("period_detect works on finite spaces")
    spectrum = eigen_oracle(P, max_states=max_states)
    d = sum(1 for v in spectrum if abs(abs(v) - 1.0) < PERIPHERAL_TOL)
    return max(d, 1)


def _clean_limit(space: StateSpace, matrix: npt.NDArray) -> Kernel:
    real = np.real(matrix)
    if np.max(np.abs(np.imag(matrix))) > 1e-8 or real.min() < -1e-8:
        logger.warning("peripheral projector is poorly conditioned")
    real = np.where(real < 1e-13, 0.0, real)
    return Kernel(space, sp.csr_matrix(real), np.zeros(real.shape[0]), KernelKind.POSITIVE)


def _log_slope(table: Sequence[tuple[int, float, float]]) -> Optional[float]:
    """Least-squares slope of log residuals over the upper half of their resolvable range."""
    resolved = [(n, r) for n, r, _ in table if r > RESIDUAL_FLOOR]
    if len(resolved) < 2:
        return None
    n_hi = resolved[-1][0]
    window = [(n, r) for n, r in resolved if n >= n_hi // 2]
    if len(window) < 2:
        return None
    ns = np.array([n for n, _ in window], dtype=np.float64)
    logs = np.log([r for _, r in window])
    return float(np.polyfit(ns, logs, 1)[0])


def ergodic_decay_check(
    P: Kernel,
    w: Optional[WeightFn] = None,
    f_suite: Optional[Sequence[npt.ArrayLike]] = None,
    n_max: int = DEFAULT_N_MAX,
    n_burn: int = DEFAULT_N_BURN,
    kappa_margin: float = DEFAULT_KAPPA_MARGIN,
    max_states: int = DEFAULT_ORACLE_MAX_STATES,
) -> ErgodicReport:
    """Verify ∥P^m f - P^k S f∥_w <= D κ^m for m = nd + k and every f.

    S is the projector on the peripheral eigenspaces, so P^k S = P^m S.
    D is fitted on m <= n_max/2 and the envelope is then asserted up to
    n_max, together with the Cesàro bound
    ∥(1/n) Σ_{j<n} P^j f - P1 f∥_w <= (3D/(1-κ) + C_per)/n, where P1
    projects on eigenvalue 1 and C_per bounds the other peripheral parts.

    Raises:
        EnvelopeViolated: With the (n, f, x) witness of the first failure.
    """
    if P.space.is_windowed:
        raise ValueError("ergodic_decay_check works on finite spaces")
    if not P.markov:
        raise NotMarkov("ergodic_decay_check needs a Markov kernel")
    if n_max < 2 or n_burn < 0:
        raise ValueError(f"need n_max >= 2 and n_burn >= 0, got {n_max}, {n_burn}")
    n = P.n_states
    w = WeightFn.constant(P.space) if w is None else w
    P.space.check_same(w.space)
    if f_suite is None:
        columns = [np.eye(n)[:, j] for j in range(n)] + [w.values]
    else:
        columns = [np.asarray(f, dtype=np.float64) for f in f_suite]
    if not columns:
        raise ValueError("f_suite must contain at least one function")
    F = np.column_stack(columns)
    if F.shape[0] != n:
        raise ValueError(f"test functions need {n} values")
    if np.any(np.max(np.abs(F) / w.values[:, None], axis=0) > 1.0 + 1e-12):
        raise ValueError("test functions must satisfy ∥f∥_w <= 1")

    dense = np.asarray(P.to_dense(), dtype=np.float64)
    d = period_detect(P, max_states)
    values, vectors = np.linalg.eig(dense)
    inverse = np.linalg.inv(vectors)
    peripheral = np.abs(np.abs(values) - 1.0) < PERIPHERAL_TOL
    unit = np.abs(values - 1.0) < PERIPHERAL_TOL
    inner = np.abs(values[~peripheral])
    sub = float(inner.max()) if inner.size else 0.0
    kappa = sub + kappa_margin
    if kappa >= 1.0:
        kappa = 0.5 * (1.0 + sub)
    S = vectors[:, peripheral] @ inverse[peripheral, :]
    P1 = vectors[:, unit] @ inverse[unit, :]

    G = np.real(F - S @ F)
    residuals = []
    witnesses = []
    for m in range(n_max + 1):
        scaled = np.abs(G) / w.values[:, None]
        flat = int(np.argmax(scaled))
        x, f_index = divmod(flat, scaled.shape[1])
        residuals.append(float(scaled[x, f_index]))
        witnesses.append((x, f_index))
        G = dense @ G

    def ratio_max(ms: range) -> float:
        ratios = [
            residuals[m] / kappa**m
            for m in ms
            if residuals[m] > RESIDUAL_FLOOR and kappa**m > 0
        ]
        return max(ratios, default=0.0)

    burn = min(n_burn, n_max // 2)
    D_fit = ratio_max(range(burn, n_max // 2 + 1))
    D_transient = ratio_max(range(burn))
    D = max(D_fit, D_transient)
    logger.debug("decay fit: kappa=%.6g D=%.6g (transient %.6g)", kappa, D_fit, D_transient)

    table = []
    for m, res in enumerate(residuals):
        envelope = D * kappa**m
        table.append((m, res, envelope))
        if res > envelope * (1.0 + 1e-9) + RESIDUAL_FLOOR:
            x, f_index = witnesses[m]
            raise EnvelopeViolated(
                f"|P^{m} f - P^k S f|/w = {res:.6g} exceeds D κ^{m} = {envelope:.6g}",
                n=m,
                f_index=f_index,
                x=x,
            )

    # peripheral eigenvalues other than 1 oscillate; their Cesàro means decay like 1/n
    c_per = 0.0
    for j in np.flatnonzero(peripheral & ~unit):
        part = np.outer(vectors[:, j], inverse[j, :]) @ F
        c_per += 2.0 * float(np.max(np.abs(part) / w.values[:, None])) / abs(1.0 - values[j])
    target = np.real(P1 @ F)
    running = np.zeros_like(F)
    power_f = F.copy()
    for k in range(1, n_max + 1):
        running += power_f
        power_f = dense @ power_f
        scaled = np.abs(running / k - target) / w.values[:, None]
        bound = (3.0 * D / (1.0 - kappa) + c_per) / k
        worst = float(scaled.max())
        if worst > bound * (1.0 + 1e-9) + RESIDUAL_FLOOR:
            x, f_index = divmod(int(np.argmax(scaled)), scaled.shape[1])
            raise EnvelopeViolated(
                f"Cesàro mean at n={k} is {worst:.6g} from P1 f, bound {bound:.6g}",
                n=k,
                f_index=f_index,
                x=x,
            )

    stat = stationary(P, max_states=max_states)
    return ErgodicReport(
        pi=stat.pi,
        d=d,
        S_limit=_clean_limit(P.space, S),
        cesaro_limit=_clean_limit(P.space, P1),
        D=D,
        kappa=kappa,
        decay_table=table,
        measured_slope=_log_slope(table),
        unique=bool(stat.unique) if stat.unique is not None else True,
    )

