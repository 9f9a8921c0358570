"""Built-in example kernels and the Conze-Raugi eigenfunction evaluator."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt

from .errors import NotAKernel
from .models import (
    AtomicMeasure,
    DriftCertificate,
    FloatArray,
    Kernel,
    MinorizationCertificate,
    StateSpace,
    WeightFn,
)
from .specfile import KernelSpec

logger = logging.getLogger(__name__)

PARTITION_TOL = 1e-12

UFunction = Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class ConzeRaugiOperator:
    """Pf(x) = u(x/2) f(x/2) + u((x+1)/2) f((x+1)/2) on [0, 1].

    Evaluated pointwise; the dyadic orbit of x never fits a fixed grid.
    """

    u: UFunction

    def check_partition(self, grid: FloatArray) -> float:
        """Max defect of u(x/2) + u((x+1)/2) = 1 on the grid.

        Raises:
            NotAKernel: If u is negative or the defect exceeds the tolerance.
        """
        left = np.asarray(self.u(grid / 2.0), dtype=np.float64)
        right = np.asarray(self.u((grid + 1.0) / 2.0), dtype=np.float64)
        if np.any(left < 0) or np.any(right < 0):
            raise NotAKernel("u must be nonnegative")
        gap = np.abs(left + right - 1.0)
        k = int(np.argmax(gap))
        defect = float(gap[k])
        if defect > PARTITION_TOL:
            raise NotAKernel(
                f"u(x/2) + u((x+1)/2) = {float(left[k] + right[k]):.6g} != 1 at x={float(grid[k]):.6g}"
            )
        return defect

    def apply(self, f: UFunction, x: FloatArray) -> FloatArray:
        half = x / 2.0
        shifted = (x + 1.0) / 2.0
        return self.u(half) * f(half) + self.u(shifted) * f(shifted)


def eigenfunction(lam: complex, n_terms: int) -> Callable[[FloatArray], npt.NDArray]:
    """f(x) = Σ_{n=1}^{N} λ^{n-1} cos(2^n π x), phases reduced mod 1 first."""
    if n_terms < 1:
        raise ValueError(f"n_terms must be >= 1, got {n_terms}")

    def f(x: FloatArray) -> npt.NDArray:
        total = np.zeros_like(x, dtype=np.complex128)
        for n in range(1, n_terms + 1):
            # 2^{n-1} x is exact in binary floating point
            phase = np.mod(np.ldexp(x, n - 1), 1.0)
            total += lam ** (n - 1) * np.cos(2.0 * math.pi * phase)
        return total

    return f


class ConzeRaugiResidual(NamedTuple):
    residual: float
    tail_bound: float
    partition_defect: float


def conze_raugi_residual(
    u: UFunction, lam: complex, n_terms: int = 48, grid: int = 1024
) -> ConzeRaugiResidual:
    """sup over a uniform grid of |P f_N - λ f_N|, with the truncation bound.

    The truncation bound 2|λ|^N / (1 - |λ|) covers the terms n > N
    dropped from both sides of the eigenrelation.
    """
    if not abs(lam) < 1:
        raise ValueError(f"|lambda| must be < 1, got {abs(lam)}")
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    points = np.arange(grid, dtype=np.float64) / grid
    operator = ConzeRaugiOperator(u)
    defect = operator.check_partition(points)
    f = eigenfunction(lam, n_terms)
    residual = float(np.max(np.abs(operator.apply(f, points) - lam * f(points))))
    tail = 2.0 * abs(lam) ** n_terms / (1.0 - abs(lam))
    logger.debug("Conze-Raugi residual %.3g (tail bound %.3g)", residual, tail)
    return ConzeRaugiResidual(residual, tail, defect)


def constant_u(value: float = 0.5) -> UFunction:
    return lambda x: np.full_like(x, value, dtype=np.float64)


def sine_u(amplitude: float = 0.1) -> UFunction:
    """u(x) = 1/2 + a sin(2πx); a Markov weight for |a| <= 1/2."""
    return lambda x: 0.5 + amplitude * np.sin(2.0 * math.pi * x)


@dataclass(frozen=True)
class WalkModel:
    """Reflected random walk with its canonical certificates."""

    p: float
    kernel: Kernel
    weight: WeightFn
    drift: DriftCertificate
    minorization: MinorizationCertificate

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def z(self) -> float:
        return math.sqrt(self.q / self.p)

    @property
    def r1(self) -> float:
        return self.drift.r1

    @property
    def bound(self) -> float:
        """1/r1 = 2√(pq), the essential radius bound with b = 1."""
        return 1.0 / self.drift.r1

    def to_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.weight, drift=self.drift, minorization=self.minorization)

    def phi(self, r: float) -> float:
        """E_1[r^σ_0] = (1 - √(1 - 4pqr²)) / (2pr) for r <= r1."""
        disc = 1.0 - 4.0 * self.p * self.q * r * r
        if disc < 0:
            raise ValueError(f"r = {r} is beyond the convergence radius {self.r1}")
        return (1.0 - math.sqrt(disc)) / (2.0 * self.p * r)


def walk_kernel(p: float, x_max: int) -> Kernel:
    """P(0,0) = q, P(x, x-1) = q, P(x, x+1) = p; row x_max leaks p past the window."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    q = 1.0 - p
    space = StateSpace.windowed(x_max)
    rows = [AtomicMeasure(space, np.array([0, 1]), np.array([q, p]))]
    for x in range(1, x_max):
        rows.append(AtomicMeasure(space, np.array([x - 1, x + 1]), np.array([q, p])))
    rows.append(AtomicMeasure(space, np.array([x_max - 1]), np.array([q]), tail_bound=p))
    return Kernel.from_rows(space, rows, markov=True, tail_reach=1)


def build_reflected_walk(p: float, x_max: int = 300) -> WalkModel:
    """Walk with w = z^x, z = √(q/p), C = {0}, r1 = 1/(2√(pq)), b = 1, ν = P(0, .)."""
    if not 0.0 < p < 0.5:
        raise ValueError(
            f"Invalid walk parameter p = {p}\n"
            f"The drift certificate needs 0 < p < 1/2"
        )
    kernel = walk_kernel(p, x_max)
    q = 1.0 - p
    z = math.sqrt(q / p)
    weight = WeightFn.geometric(kernel.space, z)
    r1 = 1.0 / (2.0 * math.sqrt(p * q))
    drift = DriftCertificate(frozenset({0}), weight, r1, r1 * (q + p * z))
    minor = MinorizationCertificate.constant({0}, 1.0, kernel.row(0))
    return WalkModel(p, kernel, weight, drift, minor)


def two_state(a: float, b: float) -> Kernel:
    """[[1-a, a], [b, 1-b]]."""
    return Kernel.from_dense(StateSpace.finite(2), [[1.0 - a, a], [b, 1.0 - b]], markov=True)


def swap() -> Kernel:
    return Kernel.from_dense(StateSpace.finite(2), [[0.0, 1.0], [1.0, 0.0]], markov=True)


def cycle(d: int) -> Kernel:
    """Deterministic rotation x -> x+1 mod d."""
    if d < 1:
        raise ValueError(f"cycle length must be >= 1, got {d}")
    return Kernel.from_dense(StateSpace.finite(d), np.roll(np.eye(d), 1, axis=1), markov=True)


def rank_one(nu: AtomicMeasure) -> Kernel:
    """P(x, .) = ν for every x."""
    nu.require_probability()
    dense = np.tile(np.real(nu.to_dense()), (nu.space.n_states, 1))
    return Kernel.from_dense(nu.space, dense, markov=True)


def random_chain(n: int, seed: int, floor: float = 0.05) -> Kernel:
    """Seeded dense chain with P >= floor/n, so E is a small set with b = floor."""
    if not 0.0 <= floor < 1.0:
        raise ValueError(f"floor must lie in [0, 1), got {floor}")
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(n), size=n)
    dense = (1.0 - floor) * rows + floor / n
    dense /= dense.sum(axis=1, keepdims=True)
    return Kernel.from_dense(StateSpace.finite(n), dense, markov=True)


def doeblin_chain(n: int, seed: int, spread: float = 0.7, atoms: int = 3) -> Kernel:
    """Rows spread * uniform + (1 - spread) * Dirichlet mass on a few random atoms."""
    rng = np.random.default_rng(seed)
    dense = np.full((n, n), spread / n)
    for x in range(n):
        cols = rng.choice(n, size=atoms, replace=False)
        dense[x, cols] += (1.0 - spread) * rng.dirichlet(np.ones(atoms))
    dense /= dense.sum(axis=1, keepdims=True)
    return Kernel.from_dense(StateSpace.finite(n), dense, markov=True)


def substochastic(n: int, seed: int, mass: float) -> Kernel:
    """Seeded kernel whose rows all have total mass `mass`."""
    rng = np.random.default_rng(seed)
    return Kernel.from_dense(StateSpace.finite(n), mass * rng.dirichlet(np.ones(n), size=n))


def grid_kernel(cells: int, density: Optional[Sequence[float]] = None) -> Kernel:
    """Ulam-style cell kernel of a shifted density on a uniform grid.

    Row x spreads mass over the cells with weights density[(y - x) mod
    cells], a circulant absolutely continuous family.
    """
    if density is None:
        density = np.exp(-0.5 * ((np.arange(cells) - cells / 2) / (cells / 8)) ** 2)
    base = np.asarray(density, dtype=np.float64)
    if base.shape != (cells,) or np.any(base < 0) or base.sum() <= 0:
        raise ValueError("density must be nonnegative with one value per cell")
    base = base / base.sum()
    dense = np.stack([np.roll(base, x) for x in range(cells)])
    return Kernel.from_dense(StateSpace.finite(cells), dense, markov=True)
