"""Data models for kernels, measures, weights, certificates and reports."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from .errors import ERROR_SPACE_MISMATCH, NotMarkov, QCertError, SpaceMismatch
from .interval import Interval

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

# Tolerance on row masses of Markov kernels
MARKOV_TOL = 1e-12
# Tolerance on the total mass of probability measures
PROBABILITY_TOL = 1e-12


class SpaceKind(str, Enum):
    FINITE = "finite"
    WINDOWED = "windowed"


@dataclass(frozen=True)
class StateSpace:
    """Finite space {0..n-1} or the window {0..x_max} of a countable space."""

    kind: SpaceKind
    size: int

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(
                f"Invalid state space size: {self.size}\n"
                f"Finite spaces need n >= 1, windowed spaces need x_max >= 1"
            )

    @classmethod
    def finite(cls, n: int) -> "StateSpace":
        return cls(SpaceKind.FINITE, n)

    @classmethod
    def windowed(cls, x_max: int) -> "StateSpace":
        return cls(SpaceKind.WINDOWED, x_max)

    @property
    def is_windowed(self) -> bool:
        return self.kind is SpaceKind.WINDOWED

    @property
    def n_states(self) -> int:
        """Number of states stored (window states for windowed spaces)."""
        return self.size + 1 if self.is_windowed else self.size

    @property
    def last(self) -> int:
        return self.n_states - 1

    def check_same(self, other: "StateSpace") -> None:
        if self != other:
            raise SpaceMismatch(ERROR_SPACE_MISMATCH.format(left=self, right=other))

    def to_dict(self) -> dict:
        return {"type": self.kind.value, "size": self.size}

    @classmethod
    def from_dict(cls, data: dict) -> "StateSpace":
        return cls(SpaceKind(data["type"]), int(data["size"]))

    def __str__(self) -> str:
        if self.is_windowed:
            return f"Windowed(x_max={self.size})"
        return f"Finite(n={self.size})"


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finitely supported measure plus a bound on mass outside the window."""

    space: StateSpace
    indices: IntArray
    weights: npt.NDArray[Any]
    tail_bound: float = 0.0

    def __post_init__(self) -> None:
        indices = np.asarray(self.indices, dtype=np.int64)
        weights = np.asarray(self.weights)
        if not np.iscomplexobj(weights):
            weights = weights.astype(np.float64)
        if indices.shape != weights.shape or indices.ndim != 1:
            raise ValueError("AtomicMeasure indices and weights must be 1-d and of equal length")
        if indices.size and (indices.min() < 0 or indices.max() >= self.space.n_states):
            raise ValueError(f"AtomicMeasure index outside {self.space}")
        if np.unique(indices).size != indices.size:
            raise ValueError("AtomicMeasure entries must have distinct state indices")
        if self.tail_bound < 0 or not math.isfinite(self.tail_bound):
            raise ValueError(f"tail_bound must be finite and >= 0, got {self.tail_bound}")
        if self.tail_bound > 0 and not self.space.is_windowed:
            raise ValueError("Finite spaces carry no tail mass")
        order = np.argsort(indices, kind="stable")
        object.__setattr__(self, "indices", indices[order])
        object.__setattr__(self, "weights", weights[order])

    @classmethod
    def dirac(cls, space: StateSpace, x: int) -> "AtomicMeasure":
        return cls(space, np.array([x]), np.array([1.0]))

    @classmethod
    def uniform(cls, space: StateSpace, support: Optional[Iterable[int]] = None) -> "AtomicMeasure":
        idx = np.arange(space.n_states) if support is None else np.array(sorted(set(support)))
        return cls(space, idx, np.full(idx.size, 1.0 / idx.size))

    @classmethod
    def geometric(cls, space: StateSpace, ratio: float) -> "AtomicMeasure":
        """Probability (1 - ratio) ratio^y, with the mass beyond a window as tail."""
        if not 0 < ratio < 1:
            raise ValueError(f"Geometric ratio must be in (0, 1), got {ratio}")
        idx = np.arange(space.n_states)
        weights = (1.0 - ratio) * ratio ** idx.astype(np.float64)
        if space.is_windowed:
            return cls(space, idx, weights, float(ratio**space.n_states))
        return cls(space, idx, weights / weights.sum())

    @classmethod
    def from_dense(
        cls, space: StateSpace, values: npt.ArrayLike, tail_bound: float = 0.0
    ) -> "AtomicMeasure":
        """Build from a dense vector over the window, dropping zero entries."""
        arr = np.asarray(values)
        if arr.shape != (space.n_states,):
            raise ValueError(f"Dense measure needs {space.n_states} values, got {arr.shape}")
        idx = np.flatnonzero(arr)
        return cls(space, idx, arr[idx], tail_bound)

    def to_dense(self) -> npt.NDArray[Any]:
        out = np.zeros(self.space.n_states, dtype=self.weights.dtype)
        out[self.indices] = self.weights
        return out

    @property
    def is_positive(self) -> bool:
        return not np.iscomplexobj(self.weights) and bool(np.all(self.weights >= 0))

    @property
    def mass(self) -> float:
        """Mass on the window (real part of the sum for complex measures)."""
        return float(np.real(self.weights.sum()))

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum()) + self.tail_bound

    def is_probability(self, tol: float = PROBABILITY_TOL) -> bool:
        return self.is_positive and abs(self.mass + self.tail_bound - 1.0) <= tol

    def require_probability(self, name: str = "nu") -> None:
        if not self.is_probability():
            raise ValueError(
                f"{name} must be a probability measure\n"
                f"Got total mass {self.mass + self.tail_bound!r} "
                f"(positive={self.is_positive})"
            )

    def to_dict(self) -> dict:
        """Complex weights are written as [re, im] pairs."""
        if np.iscomplexobj(self.weights):
            weight: list = [[float(w.real), float(w.imag)] for w in self.weights]
        else:
            weight = [float(w) for w in self.weights]
        return {
            "index": [int(i) for i in self.indices],
            "weight": weight,
            "tail": float(self.tail_bound),
        }


class KernelKind(str, Enum):
    POSITIVE = "positive"
    COMPLEX = "complex"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Bounded kernel on a discrete space stored as sparse rows.

    Row x is the measure Q(x, .) restricted to the window; tails[x] bounds
    the mass Q(x, .) puts beyond the window. That mass lies within
    `tail_reach` states of x_max.
    """

    space: StateSpace
    matrix: sp.csr_matrix
    tails: FloatArray
    kind: KernelKind = KernelKind.POSITIVE
    markov: bool = False
    tail_reach: int = 0

    def __post_init__(self) -> None:
        n = self.space.n_states
        matrix = sp.csr_matrix(self.matrix)
        if matrix.shape != (n, n):
            raise ValueError(f"Kernel matrix must be {n}x{n}, got {matrix.shape}")
        matrix.eliminate_zeros()
        matrix.sort_indices()
        tails = np.asarray(self.tails, dtype=np.float64)
        if tails.shape != (n,):
            raise ValueError(f"Kernel tails must have {n} entries, got {tails.shape}")
        if np.any(tails < 0) or not np.all(np.isfinite(tails)):
            raise ValueError("Kernel tails must be finite and >= 0")
        if np.any(tails > 0) and not self.space.is_windowed:
            raise ValueError("Finite-space kernels carry no tail mass")
        if self.kind is KernelKind.POSITIVE:
            if np.iscomplexobj(matrix.data):
                if np.any(matrix.data.imag != 0):
                    raise ValueError("Positive kernels need real entries")
                matrix = sp.csr_matrix(matrix.real)
            if matrix.data.size and matrix.data.min() < 0:
                raise ValueError(
                    f"Positive kernel has a negative entry {matrix.data.min()!r}"
                )
        if not np.all(np.isfinite(matrix.data)):
            raise ValueError("Kernel entries must be finite")
        reach = self.tail_reach
        if self.space.is_windowed and np.any(tails > 0) and reach < 1:
            reach = 1
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "tail_reach", int(reach))
        if self.markov:
            mass = self.row_mass() + tails
            worst = int(np.argmax(np.abs(mass - 1.0)))
            if self.kind is not KernelKind.POSITIVE or abs(mass[worst] - 1.0) > MARKOV_TOL:
                raise NotMarkov(
                    f"Row {worst} has mass {mass[worst]!r}; Markov kernels need row mass 1"
                )

    # Constructors

    @classmethod
    def from_dense(
        cls,
        space: StateSpace,
        values: npt.ArrayLike,
        tails: Optional[npt.ArrayLike] = None,
        markov: bool = False,
        tail_reach: int = 0,
    ) -> "Kernel":
        arr = np.asarray(values)
        kind = KernelKind.COMPLEX if np.iscomplexobj(arr) else KernelKind.POSITIVE
        t = np.zeros(space.n_states) if tails is None else np.asarray(tails, dtype=float)
        return cls(space, sp.csr_matrix(arr), t, kind, markov, tail_reach)

    @classmethod
    def from_rows(
        cls, space: StateSpace, rows: list[AtomicMeasure], markov: bool = False, tail_reach: int = 0
    ) -> "Kernel":
        if len(rows) != space.n_states:
            raise ValueError(f"Kernel needs {space.n_states} rows, got {len(rows)}")
        indptr = [0]
        indices: list[int] = []
        data: list[Any] = []
        complex_rows = False
        for row in rows:
            space.check_same(row.space)
            indices.extend(int(i) for i in row.indices)
            data.extend(row.weights.tolist())
            indptr.append(len(indices))
            complex_rows = complex_rows or not row.is_positive
        dtype = np.complex128 if complex_rows else np.float64
        n = space.n_states
        matrix = sp.csr_matrix(
            (np.array(data, dtype=dtype), np.array(indices, dtype=np.int64), np.array(indptr)),
            shape=(n, n),
        )
        tails = np.array([row.tail_bound for row in rows])
        kind = KernelKind.COMPLEX if complex_rows else KernelKind.POSITIVE
        return cls(space, matrix, tails, kind, markov, tail_reach)

    @classmethod
    def identity(cls, space: StateSpace) -> "Kernel":
        n = space.n_states
        return cls(space, sp.identity(n, format="csr"), np.zeros(n), markov=True)

    @classmethod
    def zeros(cls, space: StateSpace) -> "Kernel":
        n = space.n_states
        return cls(space, sp.csr_matrix((n, n)), np.zeros(n))

    # Views

    @property
    def n_states(self) -> int:
        return self.space.n_states

    def row(self, x: int) -> AtomicMeasure:
        start, end = self.matrix.indptr[x], self.matrix.indptr[x + 1]
        return AtomicMeasure(
            self.space,
            self.matrix.indices[start:end].copy(),
            self.matrix.data[start:end].copy(),
            float(self.tails[x]),
        )

    def rows(self) -> list[AtomicMeasure]:
        return [self.row(x) for x in range(self.n_states)]

    def row_mass(self) -> FloatArray:
        """Σ_y |Q(x, {y})| per row, window part only."""
        return np.asarray(abs(self.matrix).sum(axis=1), dtype=np.float64).ravel()

    def to_dense(self) -> npt.NDArray[Any]:
        return self.matrix.toarray()

    def restrict(self, x_max: int) -> "Kernel":
        """Truncate a windowed kernel to {0..x_max}; escaping mass joins the tails."""
        if not self.space.is_windowed:
            raise ValueError("Only windowed kernels can be restricted")
        if not 1 <= x_max <= self.space.size:
            raise ValueError(f"x_max must be in 1..{self.space.size}, got {x_max}")
        if x_max == self.space.size:
            return self
        keep = x_max + 1
        sub = self.matrix[:keep, :keep]
        escaped = np.asarray(abs(self.matrix[:keep, keep:]).sum(axis=1)).ravel()
        tails = self.tails[:keep] + escaped
        reach = self.tail_reach + (self.space.size - x_max)
        return Kernel(
            StateSpace.windowed(x_max), sub, tails, self.kind, self.markov, reach
        )

    def with_matrix(
        self,
        matrix: sp.csr_matrix,
        tails: FloatArray,
        kind: Optional[KernelKind] = None,
        markov: bool = False,
        tail_reach: Optional[int] = None,
    ) -> "Kernel":
        return Kernel(
            self.space,
            matrix,
            tails,
            self.kind if kind is None else kind,
            markov,
            self.tail_reach if tail_reach is None else tail_reach,
        )

    def to_dict(self) -> dict:
        rows = []
        for x in range(self.n_states):
            r = self.row(x)
            rows.append(r.to_dict())
        return {
            "space": self.space.to_dict(),
            "markov": self.markov,
            "tail_reach": self.tail_reach,
            "rows": rows,
        }


@dataclass(frozen=True, eq=False)
class WeightFn:
    """Weight w >= 1 on the window, optionally extended geometrically.

    Beyond the window, w(x) = w(x_max) * tail_ratio ** (x - x_max).
    """

    space: StateSpace
    values: FloatArray
    tail_ratio: Optional[float] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.space.n_states,):
            raise ValueError(f"Weight needs {self.space.n_states} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Weight values must be finite")
        if np.any(values < 1.0):
            bad = int(np.argmin(values))
            raise ValueError(
                f"Weight values must be >= 1\n"
                f"w({bad}) = {values[bad]!r}"
            )
        if self.tail_ratio is not None and not self.tail_ratio > 1.0:
            raise ValueError(f"Geometric tail ratio must be > 1, got {self.tail_ratio}")
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, space: StateSpace, c: float = 1.0) -> "WeightFn":
        return cls(space, np.full(space.n_states, float(c)))

    @classmethod
    def geometric(cls, space: StateSpace, z: float) -> "WeightFn":
        """w(x) = z**x with the matching geometric tail model."""
        values = np.power(float(z), np.arange(space.n_states, dtype=np.float64))
        return cls(space, values, float(z) if space.is_windowed else None)

    @property
    def has_tail_model(self) -> bool:
        return self.tail_ratio is not None

    def extrapolate(self, k: int) -> float:
        """w(x_max + k) under the tail model."""
        if k <= 0:
            return float(self.values[self.space.last + k])
        if self.tail_ratio is None:
            raise ValueError("Weight has no tail model")
        return float(self.values[-1] * self.tail_ratio**k)

    def sup_within(self, reach: int) -> float:
        """sup of w over {0..x_max+reach}."""
        top = float(self.values.max())
        if reach <= 0:
            return top
        return max(top, self.extrapolate(reach))

    def norm_of(self, f: npt.ArrayLike) -> float:
        """∥f∥_w = sup |f|/w on the window."""
        return float(np.max(np.abs(np.asarray(f)) / self.values))

    def to_dict(self) -> dict:
        if self.tail_ratio is not None and np.allclose(
            self.values, np.power(self.tail_ratio, np.arange(self.values.size)), rtol=1e-15, atol=0
        ):
            return {"geometric": self.tail_ratio}
        data: dict = {"values": [float(v) for v in self.values]}
        if self.tail_ratio is not None:
            data["tail_ratio"] = self.tail_ratio
        return data


@dataclass(frozen=True, eq=False)
class Multiplier:
    """Complex multiplier χ(x, y).

    `values` is either 1-d (a function of y) or 2-d (a full table). Only
    values on the support of the kernel rows matter.
    """

    values: npt.NDArray[np.complex128]
    norm_bound: float = -1.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim not in (1, 2):
            raise ValueError("Multiplier values must be 1-d (function of y) or 2-d")
        stored = float(np.max(np.abs(values))) if values.size else 0.0
        bound = stored if self.norm_bound < 0 else float(self.norm_bound)
        if not math.isfinite(bound) or bound < stored:
            raise ValueError(
                f"Multiplier norm_bound {bound!r} is below max |value| {stored!r}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "norm_bound", bound)

    @classmethod
    def constant(cls, n: int, c: complex = 1.0) -> "Multiplier":
        return cls(np.full(n, complex(c)))

    @classmethod
    def fourier(cls, xi: npt.ArrayLike, t: float) -> "Multiplier":
        """χ_t(x, y) = exp(i t ξ(y))."""
        return cls(np.exp(1j * float(t) * np.asarray(xi, dtype=np.float64)), 1.0)

    def table(self, n: int) -> npt.NDArray[np.complex128]:
        if self.values.ndim == 1:
            if self.values.size != n:
                raise ValueError(f"Multiplier has {self.values.size} values, space has {n}")
            return np.broadcast_to(self.values, (n, n))
        if self.values.shape != (n, n):
            raise ValueError(f"Multiplier table must be {n}x{n}")
        return self.values


@dataclass(frozen=True, eq=False)
class DensityKernel:
    """T_{ν,α}(x, {y}) = α(x, y) ν({y}).

    With `weighted` set, ui_tail and friends use α^{(w)}(x, y) =
    α(x, y) w(y) / w(x).
    """

    nu: AtomicMeasure
    alpha: sp.csr_matrix
    weighted: Optional[WeightFn] = None

    def __post_init__(self) -> None:
        n = self.nu.space.n_states
        alpha = sp.csr_matrix(self.alpha, dtype=np.float64)
        if alpha.shape != (n, n):
            raise ValueError(f"Density matrix must be {n}x{n}, got {alpha.shape}")
        if alpha.data.size and alpha.data.min() < 0:
            raise ValueError("Densities must be >= 0")
        # α only matters where ν charges a state
        nu_dense = np.real(self.nu.to_dense())
        mask = sp.diags((nu_dense > 0).astype(np.float64))
        alpha = sp.csr_matrix(alpha @ mask)
        alpha.eliminate_zeros()
        alpha.sort_indices()
        object.__setattr__(self, "alpha", alpha)
        if self.weighted is not None:
            self.nu.space.check_same(self.weighted.space)

    @property
    def space(self) -> StateSpace:
        return self.nu.space

    @classmethod
    def constant(
        cls, nu: AtomicMeasure, rows: Optional[Iterable[int]] = None, value: float = 1.0
    ) -> "DensityKernel":
        """α(x, y) = value on rows (default: every row) and supp ν."""
        n = nu.space.n_states
        row_idx = np.arange(n) if rows is None else np.array(sorted(set(rows)), dtype=np.int64)
        cols = nu.indices[np.real(nu.weights) > 0]
        rr = np.repeat(row_idx, cols.size)
        cc = np.tile(cols, row_idx.size)
        data = np.full(rr.size, float(value))
        return cls(nu, sp.csr_matrix((data, (rr, cc)), shape=(n, n)))

    def nu_dense(self) -> FloatArray:
        return np.asarray(np.real(self.nu.to_dense()), dtype=np.float64)

    def effective_alpha(self) -> sp.csr_matrix:
        """α, or α^{(w)} when the kernel is weighted."""
        if self.weighted is None:
            return self.alpha
        w = self.weighted.values
        return sp.csr_matrix(sp.diags(1.0 / w) @ self.alpha @ sp.diags(w))

    def conjugated(self, w: WeightFn) -> "DensityKernel":
        """Density kernel of W^{-1} T W: same ν, density α^{(w)}."""
        alpha_w = sp.csr_matrix(sp.diags(1.0 / w.values) @ self.alpha @ sp.diags(w.values))
        return DensityKernel(self.nu, alpha_w)

    def to_kernel(self) -> Kernel:
        t = sp.csr_matrix(self.alpha @ sp.diags(self.nu_dense()))
        mass = np.asarray(t.sum(axis=1)).ravel()
        markov = bool(np.all(np.abs(mass - 1.0) <= MARKOV_TOL))
        return Kernel(self.space, t, np.zeros(self.space.n_states), markov=markov)

    def row_mass(self) -> FloatArray:
        return np.asarray(self.alpha @ self.nu_dense(), dtype=np.float64).ravel()


@dataclass(frozen=True, eq=False)
class DoeblinCertificate:
    """Claim: ν(A) <= eta implies Q^ell(x, A) <= rho**ell for every x."""

    ell: int
    nu: AtomicMeasure
    eta: float
    rho: float

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValueError(f"ell must be >= 1, got {self.ell}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        self.nu.require_probability()

    @property
    def bound(self) -> float:
        return float(self.rho**self.ell)


def _state_set(states: Iterable[int], space: StateSpace, name: str) -> frozenset[int]:
    out = frozenset(int(x) for x in states)
    if not out:
        raise ValueError(f"{name} must be a nonempty state set")
    if min(out) < 0 or max(out) >= space.n_states:
        raise ValueError(f"{name} has states outside {space}")
    return out


@dataclass(frozen=True, eq=False)
class DriftCertificate:
    """Claim: Pw <= (w 1_{C^c} + eta 1_C) / r1 pointwise."""

    C: frozenset[int]
    w: WeightFn
    r1: float
    eta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "C", _state_set(self.C, self.w.space, "C"))
        if not self.r1 > 1.0:
            raise ValueError(f"r1 must be > 1, got {self.r1}")
        if self.eta < 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    def in_c(self) -> npt.NDArray[np.bool_]:
        mask = np.zeros(self.w.space.n_states, dtype=bool)
        mask[sorted(self.C)] = True
        return mask

    def rhs(self) -> FloatArray:
        """r1^{-1}(w 1_{C^c} + eta 1_C) on the window."""
        return np.where(self.in_c(), self.eta, self.w.values) / self.r1


@dataclass(frozen=True, eq=False)
class MinorizationCertificate:
    """Claim: P(x, .) >= b T_{ν,α}(x, .) for x in C, with T Markov."""

    C: frozenset[int]
    b: float
    nu: AtomicMeasure
    alpha: sp.csr_matrix

    def __post_init__(self) -> None:
        object.__setattr__(self, "C", _state_set(self.C, self.nu.space, "C"))
        if not 0.0 < self.b <= 1.0:
            raise ValueError(
                f"Invalid minorization constant b = {self.b}\n"
                f"b must lie in (0, 1]"
            )
        self.nu.require_probability()
        object.__setattr__(self, "alpha", sp.csr_matrix(self.alpha, dtype=np.float64))

    @classmethod
    def constant(cls, C: Iterable[int], b: float, nu: AtomicMeasure) -> "MinorizationCertificate":
        """α ≡ 1, so T(x, .) = ν for every x."""
        return cls(frozenset(C), b, nu, DensityKernel.constant(nu).alpha)

    @property
    def density(self) -> DensityKernel:
        return DensityKernel(self.nu, self.alpha)

    def in_c(self) -> npt.NDArray[np.bool_]:
        mask = np.zeros(self.nu.space.n_states, dtype=bool)
        mask[sorted(self.C)] = True
        return mask


@dataclass
class CheckResult:
    """Outcome of a certificate verification."""

    name: str
    passed: bool
    witness: dict = field(default_factory=dict)
    detail: str = ""
    error_type: type = QCertError

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise self.error_type(f"{self.name} failed: {self.detail}")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "witness": _jsonable(self.witness),
            "detail": self.detail,
        }


class EssMethod(str, Enum):
    DOEBLIN_TAIL = "DoeblinTail"
    RESIDUAL_NORM = "ResidualNorm"
    WEIGHTED_CONJUGATE = "WeightedConjugate"


@dataclass
class EssBound:
    """Certified upper bound on the essential spectral radius."""

    value: Interval
    method: EssMethod
    witnesses: dict = field(default_factory=dict)
    quasi_compact: Optional[bool] = None
    oracle_comparison: Optional[dict] = None

    def __post_init__(self) -> None:
        if self.value.lo < 0:
            raise ValueError(f"Essential radius bound must be >= 0, got {self.value}")

    def to_dict(self) -> dict:
        return {
            "value": self.value.to_dict(),
            "method": self.method.value,
            "witnesses": _jsonable(self.witnesses),
            "quasi_compact": self.quasi_compact,
            "oracle": _jsonable(self.oracle_comparison),
        }


@dataclass
class RenewalProfile:
    """h samples, the r_b bracket and the renewal majorants m, M, M_w."""

    h_samples: list[tuple[float, Interval]]
    r_b: Interval
    r1: float
    eta: float
    b: float

    @property
    def eta1(self) -> float:
        if self.b >= 1.0:
            return self.r1
        return max(self.r1, self.eta / (1.0 - self.b))

    def m(self, r: float) -> float:
        """r1 η1 / (r1 - max(r, 1))**2."""
        gap = self.r1 - max(abs(r), 1.0)
        if gap <= 0:
            return math.inf
        return self.r1 * self.eta1 / gap**2

    def M(self, r: float, h: Interval) -> Interval:
        """m(r) / (1 - (1-b) h(r)), an interval through h."""
        denom = 1.0 - (1.0 - self.b) * h.hi
        if denom <= 0 or math.isinf(self.m(r)):
            return Interval.unbounded()
        lo_denom = 1.0 - (1.0 - self.b) * h.lo
        return Interval.outward(self.m(r) / lo_denom, self.m(r) / denom)

    def Mw(self, r: float, h: Interval) -> Interval:
        """(r1/(r1 - r)) (1 + η r M(r) / r1)."""
        if r >= self.r1:
            return Interval.unbounded()
        big_m = self.M(r, h)
        if not big_m.is_bounded:
            return Interval.unbounded()
        scale = self.r1 / (self.r1 - r)
        return Interval.outward(
            scale * (1.0 + self.eta * r * big_m.lo / self.r1),
            scale * (1.0 + self.eta * r * big_m.hi / self.r1),
        )

    @property
    def bound(self) -> float:
        """Essential radius bound 1 / r_b.lo in the weighted space."""
        return 1.0 / self.r_b.lo

    def to_dict(self) -> dict:
        return {
            "r_b": self.r_b.to_dict(),
            "eta1": self.eta1,
            "bound": self.bound,
            "h_samples": [{"r": r, "h": h.to_dict()} for r, h in self.h_samples],
        }


@dataclass
class ErgodicReport:
    """Decay verification of P^{nd+k} towards P^k S."""

    pi: AtomicMeasure
    d: int
    S_limit: Kernel
    cesaro_limit: Kernel
    D: float
    kappa: float
    decay_table: list[tuple[int, float, float]]
    measured_slope: Optional[float] = None
    unique: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa}")

    def to_dict(self) -> dict:
        return {
            "pi": [float(p) for p in np.real(self.pi.to_dense())],
            "period": self.d,
            "D": self.D,
            "kappa": self.kappa,
            "measured_log_slope": self.measured_slope,
            "unique_stationary": self.unique,
            "decay_table": [
                {"n": n, "residual": res, "envelope": env} for n, res, env in self.decay_table
            ],
        }


@dataclass
class TraceStep:
    """One computation feeding a report number."""

    method: str
    value: Interval
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "value": self.value.to_dict(), "inputs": _jsonable(self.inputs)}


@dataclass
class QCReport:
    """Aggregated certificate report for one kernel."""

    spectral_radius: Interval
    re_upper: Interval
    trace: list[TraceStep] = field(default_factory=list)
    r_b: Optional[Interval] = None
    verification: dict[str, bool] = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    quasi_compact: Optional[bool] = None
    oracle: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    @property
    def all_verified(self) -> bool:
        return all(self.verification.values())

    def to_dict(self) -> dict:
        return {
            "spectral_radius": self.spectral_radius.to_dict(),
            "re_upper": self.re_upper.to_dict(),
            "r_b": None if self.r_b is None else self.r_b.to_dict(),
            "quasi_compact": self.quasi_compact,
            "verification": dict(sorted(self.verification.items())),
            "checks": [c.to_dict() for c in self.checks],
            "trace": [s.to_dict() for s in self.trace],
            "oracle": _jsonable(self.oracle),
            "extra": _jsonable(self.extra),
        }


def _jsonable(value: Any) -> Any:
    """Convert numpy scalars, arrays, intervals and sets for json.dumps."""
    if isinstance(value, Interval):
        return value.to_dict()
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(_jsonable(v) for v in value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(np.real(value)), float(np.imag(value))]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(value, Enum):
        return value.value
    return value


def to_jsonable(value: Any) -> Any:
    return _jsonable(value)

