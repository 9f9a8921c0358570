"""Closed real intervals with outward rounding.

Every certified scalar in qcert is an Interval. Endpoints are widened by
one unit in the last place after each arithmetic step so that results
enclose the exact value computed in real arithmetic.
"""

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

Number = Union[int, float]


def _down(x: float) -> float:
    if math.isinf(x):
        return x
    return float(np.nextafter(x, -np.inf))


def _up(x: float) -> float:
    if math.isinf(x):
        return x
    return float(np.nextafter(x, np.inf))


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi].

    Both endpoints are finite unless the interval was built with
    `Interval.unbounded()` or from an explicit infinite endpoint.
    """

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError(f"Interval endpoints must not be NaN: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(
                f"Invalid interval: lo={self.lo} > hi={self.hi}\n"
                f"Intervals must satisfy lo <= hi"
            )

    @classmethod
    def point(cls, x: Number) -> "Interval":
        """Degenerate interval [x, x]."""
        return cls(float(x), float(x))

    @classmethod
    def outward(cls, lo: Number, hi: Number) -> "Interval":
        """Interval [lo, hi] widened by one ulp on each side."""
        return cls(_down(float(lo)), _up(float(hi)))

    @classmethod
    def outward_nonneg(cls, lo: Number, hi: Number) -> "Interval":
        """Outward interval for quantities known to be >= 0 (masses, norms, radii)."""
        return cls(max(0.0, _down(float(lo))), _up(float(hi)))

    @classmethod
    def unbounded(cls, lo: Number = 0.0) -> "Interval":
        """Interval [lo, +inf), used when no finite bound is available."""
        return cls(float(lo), math.inf)

    @classmethod
    def hull_of(cls, values: "list[Interval]") -> "Interval":
        if not values:
            raise ValueError("hull_of needs at least one interval")
        return cls(min(v.lo for v in values), max(v.hi for v in values))

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        if not self.is_bounded:
            return math.inf
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: Number, tol: float = 0.0) -> bool:
        return self.lo - tol <= x <= self.hi + tol

    def overlaps(self, other: "Interval", tol: float = 0.0) -> bool:
        return self.lo <= other.hi + tol and other.lo <= self.hi + tol

    def hull(self, other: "Interval") -> "Interval":
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def __add__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        return Interval.outward(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __sub__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        return Interval.outward(self.lo - o.hi, self.hi - o.lo)

    def __rsub__(self, other: Number) -> "Interval":
        return _coerce(other) - self

    def __mul__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        products = [
            _mul(self.lo, o.lo),
            _mul(self.lo, o.hi),
            _mul(self.hi, o.lo),
            _mul(self.hi, o.hi),
        ]
        return Interval.outward(min(products), max(products))

    __rmul__ = __mul__

    def __truediv__(self, other: Union["Interval", Number]) -> "Interval":
        o = _coerce(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroDivisionError(f"Interval division by {o} containing zero")
        return self * Interval.outward(1.0 / o.hi, 1.0 / o.lo)

    def root(self, n: Number) -> "Interval":
        """x ↦ x^(1/n) for n >= 1 on a nonnegative interval (monotone)."""
        if n <= 0:
            raise ValueError(f"root order must be positive, got {n}")
        if self.lo < 0.0:
            raise ValueError(f"root of an interval with negative part: {self}")
        exponent = 1.0 / float(n)
        hi = math.inf if math.isinf(self.hi) else self.hi**exponent
        return Interval.outward_nonneg(self.lo**exponent, hi)

    def to_dict(self) -> dict:
        return {"lo": _json_float(self.lo), "hi": _json_float(self.hi)}

    @classmethod
    def from_dict(cls, data: dict) -> "Interval":
        return cls(float(data["lo"]), float(data["hi"]))

    def __str__(self) -> str:
        if self.lo == self.hi:
            return f"{self.lo:.12g}"
        return f"[{self.lo:.12g}, {self.hi:.12g}]"


def _mul(a: float, b: float) -> float:
    # 0 * inf counts as 0 for enclosure purposes
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def _coerce(value: Union[Interval, Number]) -> Interval:
    if isinstance(value, Interval):
        return value
    return Interval.point(value)


def _json_float(x: float) -> Union[float, str]:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x
