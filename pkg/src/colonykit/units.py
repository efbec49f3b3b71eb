"""Minimal dimensional analysis for microscopy measurements.

Three base dimensions cover everything this package measures: length,
time and fluorescence intensity. Values are stored in canonical units
(micrometers, hours, arbitrary intensity units); other accepted spellings
(nm, mm, min, s) are converted on construction. Mixing dimensions in
addition or comparison is a hard error, never a warning.

Unit tokens are compact ASCII strings: ``um2`` for area, ``h`` for time,
``1/h`` for a rate, ``um2/h`` for an area rate, ``au`` for intensity.
The same tokens appear in exported column headers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DivisionByZero,
    InvalidInput,
    InvalidMetadata,
)

__all__ = [
    "Dimension",
    "Quantity",
    "QuantitySeries",
    "DIMENSIONLESS",
    "LENGTH",
    "AREA",
    "TIME",
    "RATE",
    "INTENSITY",
    "AREA_RATE",
    "quantity",
    "parse_unit",
    "unit_token",
    "px_to_physical",
]


@dataclass(frozen=True)
class Dimension:
    """Exponent vector over the three base dimensions."""

    length: int = 0
    time: int = 0
    intensity: int = 0

    def times(self, other: "Dimension") -> "Dimension":
        return Dimension(
            self.length + other.length,
            self.time + other.time,
            self.intensity + other.intensity,
        )

    def over(self, other: "Dimension") -> "Dimension":
        return Dimension(
            self.length - other.length,
            self.time - other.time,
            self.intensity - other.intensity,
        )

    def power(self, n: int) -> "Dimension":
        return Dimension(self.length * n, self.time * n, self.intensity * n)

    @property
    def is_dimensionless(self) -> bool:
        return self.length == 0 and self.time == 0 and self.intensity == 0


DIMENSIONLESS = Dimension()
LENGTH = Dimension(length=1)
AREA = Dimension(length=2)
TIME = Dimension(time=1)
RATE = Dimension(time=-1)
INTENSITY = Dimension(intensity=1)
AREA_RATE = Dimension(length=2, time=-1)

# symbol -> (base dimension, factor that converts one of it to canonical)
_SYMBOLS: dict[str, tuple[Dimension, float]] = {
    "um": (LENGTH, 1.0),
    "nm": (LENGTH, 1e-3),
    "mm": (LENGTH, 1e3),
    "h": (TIME, 1.0),
    "min": (TIME, 1.0 / 60.0),
    "s": (TIME, 1.0 / 3600.0),
    "au": (INTENSITY, 1.0),
}


def _parse_factor(text: str) -> tuple[Dimension, float]:
    sym = text.rstrip("0123456789")
    exp_str = text[len(sym) :]
    if sym not in _SYMBOLS:
        raise InvalidInput(f"unknown unit symbol {text!r}")
    exp = int(exp_str) if exp_str else 1
    if exp < 1:
        raise InvalidInput(f"unit exponent must be positive in {text!r}")
    dim, scale = _SYMBOLS[sym]
    return dim.power(exp), scale**exp


def _parse_side(text: str) -> tuple[Dimension, float]:
    dim, scale = DIMENSIONLESS, 1.0
    for part in text.split():
        d, s = _parse_factor(part)
        dim = dim.times(d)
        scale *= s
    return dim, scale


def parse_unit(token: str) -> tuple[Dimension, float]:
    """Parse a unit token into (dimension, canonical scale factor).

    ``""`` and ``"1"`` denote dimensionless. A single ``/`` separates the
    numerator from the denominator: ``"um2/h"``, ``"1/h"``.
    """
    token = token.strip()
    if token in ("", "1"):
        return DIMENSIONLESS, 1.0
    if token.count("/") > 1:
        raise InvalidInput(f"malformed unit token {token!r}")
    num, _, den = token.partition("/")
    num = num.strip()
    dim, scale = (DIMENSIONLESS, 1.0) if num == "1" else _parse_side(num)
    if den:
        ddim, dscale = _parse_side(den)
        dim = dim.over(ddim)
        scale /= dscale
    return dim, scale


def unit_token(dim: Dimension) -> str:
    """Canonical token for a dimension (``um2``, ``1/h``, ``au``, ...)."""
    num: list[str] = []
    den: list[str] = []
    for exp, sym in ((dim.length, "um"), (dim.time, "h"), (dim.intensity, "au")):
        if exp > 0:
            num.append(sym + (str(exp) if exp > 1 else ""))
        elif exp < 0:
            den.append(sym + (str(-exp) if exp < -1 else ""))
    head = " ".join(num) if num else ("1" if den else "")
    return head + ("/" + " ".join(den) if den else "")


def _coerce(value) -> "Quantity":
    if isinstance(value, Quantity):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Quantity(float(value), DIMENSIONLESS)
    raise DimensionMismatch(f"cannot combine Quantity with {type(value).__name__}")


@dataclass(frozen=True, eq=False)
class Quantity:
    """A scalar with a dimension, stored in canonical units."""

    value: float
    dimension: Dimension = DIMENSIONLESS

    @property
    def unit(self) -> str:
        return unit_token(self.dimension)

    def to(self, unit: str) -> float:
        """Numeric value expressed in ``unit``; the dimension must match."""
        dim, scale = parse_unit(unit)
        if dim != self.dimension:
            raise DimensionMismatch(
                f"cannot express {self.unit or '1'} as {unit!r}"
            )
        return self.value / scale

    def _check(self, other: "Quantity", op: str) -> None:
        if self.dimension != other.dimension:
            raise DimensionMismatch(
                f"{op} of {self.unit or '1'} and {other.unit or '1'}"
            )

    def __add__(self, other) -> "Quantity":
        other = _coerce(other)
        self._check(other, "addition")
        return Quantity(self.value + other.value, self.dimension)

    __radd__ = __add__

    def __sub__(self, other) -> "Quantity":
        other = _coerce(other)
        self._check(other, "subtraction")
        return Quantity(self.value - other.value, self.dimension)

    def __rsub__(self, other) -> "Quantity":
        return _coerce(other).__sub__(self)

    def __mul__(self, other) -> "Quantity":
        other = _coerce(other)
        return Quantity(
            self.value * other.value, self.dimension.times(other.dimension)
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Quantity":
        other = _coerce(other)
        if other.value == 0.0:
            raise DivisionByZero(
                f"division of {self.unit or '1'} by zero {other.unit or '1'}"
            )
        return Quantity(
            self.value / other.value, self.dimension.over(other.dimension)
        )

    def __rtruediv__(self, other) -> "Quantity":
        return _coerce(other).__truediv__(self)

    def __neg__(self) -> "Quantity":
        return Quantity(-self.value, self.dimension)

    def __abs__(self) -> "Quantity":
        return Quantity(abs(self.value), self.dimension)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Quantity):
            return NotImplemented
        self._check(other, "comparison")
        return self.value == other.value

    def __ne__(self, other) -> bool:
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __lt__(self, other) -> bool:
        other = _coerce(other)
        self._check(other, "comparison")
        return self.value < other.value

    def __le__(self, other) -> bool:
        other = _coerce(other)
        self._check(other, "comparison")
        return self.value <= other.value

    def __gt__(self, other) -> bool:
        other = _coerce(other)
        self._check(other, "comparison")
        return self.value > other.value

    def __ge__(self, other) -> bool:
        other = _coerce(other)
        self._check(other, "comparison")
        return self.value >= other.value

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        tok = self.unit
        return f"Quantity({self.value!r}{', ' + tok if tok else ''})"


def quantity(value: float, unit: str = "") -> Quantity:
    """Build a Quantity from a value expressed in ``unit``."""
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidInput(f"quantity value must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InvalidInput(f"quantity value must be finite, got {value!r}")
    dim, scale = parse_unit(unit)
    return Quantity(float(value) * scale, dim)


def px_to_physical(value: float, power: int, pixel_size: Quantity) -> Quantity:
    """Convert a pixel measurement to physical units.

    ``value`` is in px^power (area uses power 2); the result carries
    dimension length^power.
    """
    if pixel_size.dimension != LENGTH:
        raise DimensionMismatch(
            f"pixel_size must be a length, got {pixel_size.unit or 'dimensionless'}"
        )
    if not pixel_size.value > 0:
        raise InvalidMetadata("pixel_size must be positive")
    return Quantity(
        float(value) * pixel_size.value ** power, LENGTH.power(power)
    )


class QuantitySeries:
    """A time series whose values share one dimension.

    Times are stored in hours, strictly increasing; values in canonical
    units of ``dimension``. Arrays are copied and set read-only.
    """

    def __init__(
        self,
        times_h: Sequence[float] | np.ndarray,
        values: Sequence[float] | np.ndarray,
        dimension: Dimension = DIMENSIONLESS,
        name: str = "",
    ) -> None:
        t = np.asarray(times_h, dtype=float).copy()
        v = np.asarray(values, dtype=float).copy()
        if t.ndim != 1 or v.ndim != 1:
            raise InvalidInput("series times and values must be 1-D")
        if t.shape != v.shape:
            raise InvalidInput(
                f"series length mismatch: {t.size} times, {v.size} values"
            )
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise InvalidInput("series times must be strictly increasing")
        if not np.all(np.isfinite(t)):
            raise InvalidInput("series times must be finite")
        t.setflags(write=False)
        v.setflags(write=False)
        self.times_h = t
        self.values = v
        self.dimension = dimension
        self.name = name

    def __len__(self) -> int:
        return int(self.times_h.size)

    @property
    def value_unit(self) -> str:
        return unit_token(self.dimension)

    def value_quantities(self) -> list[Quantity]:
        return [Quantity(float(v), self.dimension) for v in self.values]

    @classmethod
    def from_quantities(
        cls,
        times: Iterable[Quantity],
        values: Iterable[Quantity],
        name: str = "",
    ) -> "QuantitySeries":
        times = list(times)
        values = list(values)
        for t in times:
            if t.dimension != TIME:
                raise DimensionMismatch("series times must carry a time dimension")
        dims = {v.dimension for v in values}
        if len(dims) > 1:
            raise DimensionMismatch("series values must share one dimension")
        dim = dims.pop() if dims else DIMENSIONLESS
        return cls([t.value for t in times], [v.value for v in values], dim, name)

    def __repr__(self) -> str:
        return (
            f"QuantitySeries(name={self.name!r}, n={len(self)}, "
            f"unit={self.value_unit!r})"
        )
