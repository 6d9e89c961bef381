"""Periodic grids, difference operators and discrete inner products.

Values are stored 0-based: storage slot ``s`` holds node ``s + 1``, whose
coordinate is ``x_left + (s + 1) * h``.  All index arithmetic wraps modulo
``M``.  The array-level helpers (``d1``, ``d2``, ``d1d2``, ``psi_values``)
work on plain ndarrays and are what the time stepper calls in its inner
loop; the ``GridFn`` wrappers add the shape and grid-compatibility checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Two grid functions were combined across different grids."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``M`` nodes over one period of length ``L``."""

    x_left: float
    L: float
    M: int

    def __post_init__(self):
        if not self.L > 0 or not np.isfinite(self.L):
            raise ValueError(f"period length must be positive, got {self.L}")
        if int(self.M) != self.M or self.M < 4:
            raise ValueError(f"node count must be an integer >= 4, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "x_left", float(self.x_left))
        object.__setattr__(self, "L", float(self.L))

    @classmethod
    def from_spacing(cls, x_left: float, L: float, h: float) -> "GridSpec":
        """Grid with spacing as close to ``h`` as the period allows.

        ``M = round(L / h)`` and the actual spacing is recomputed as ``L / M``.
        """
        if not h > 0:
            raise ValueError(f"spacing must be positive, got {h}")
        return cls(x_left, L, int(round(L / h)))

    @property
    def h(self) -> float:
        return self.L / self.M

    @property
    def x(self) -> np.ndarray:
        return self.x_left + np.arange(1, self.M + 1) * self.h

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.x_left, self.L, self.M * factor)

    def zeros(self) -> "GridFn":
        return GridFn(self, np.zeros(self.M))

    def sample(self, func) -> "GridFn":
        return GridFn(self, np.asarray(func(self.x), dtype=float))


@dataclass(frozen=True, eq=False)
class GridFn:
    """Nodal values of a periodic function on ``spec``."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.spec.M,):
            raise ValueError(
                f"expected {self.spec.M} values for this grid, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite entries")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __getitem__(self, i: int) -> float:
        return float(self.values[i % self.spec.M])

    def __len__(self) -> int:
        return self.spec.M

    def _check(self, other: "GridFn") -> None:
        if other.spec != self.spec:
            raise GridMismatchError(f"grid {other.spec} does not match {self.spec}")

    def __add__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.spec, self.values + other.values)
        return GridFn(self.spec, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.spec, self.values - other.values)
        return GridFn(self.spec, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFn):
            self._check(other)
            return GridFn(self.spec, self.values * other.values)
        return GridFn(self.spec, self.values * other)

    __rmul__ = __mul__
    __radd__ = __add__

    def __neg__(self):
        return GridFn(self.spec, -self.values)


def _shared_spec(*fns: GridFn) -> GridSpec:
    spec = fns[0].spec
    for f in fns[1:]:
        if f.spec != spec:
            raise GridMismatchError(f"grid {f.spec} does not match {spec}")
    return spec


# -- array-level stencils -------------------------------------------------

def d1(v: np.ndarray, h: float) -> np.ndarray:
    """Centered first difference ``(v[i+1] - v[i-1]) / 2h``."""
    return (np.roll(v, -1) - np.roll(v, 1)) / (2.0 * h)


def d2(v: np.ndarray, h: float) -> np.ndarray:
    """Second difference ``(v[i+1] - 2 v[i] + v[i-1]) / h**2``."""
    return (np.roll(v, -1) - 2.0 * v + np.roll(v, 1)) / (h * h)


def d1d2(v: np.ndarray, h: float) -> np.ndarray:
    return d1(d2(v, h), h)


def backward(v: np.ndarray, h: float) -> np.ndarray:
    """Half-grid difference ``(v[i] - v[i-1]) / h`` (value at ``i - 1/2``)."""
    return (v - np.roll(v, 1)) / h


def psi_values(u: np.ndarray, v: np.ndarray, h: float) -> np.ndarray:
    return (u * d1(v, h) + d1(u * v, h)) / 3.0


# -- grid-function operators ----------------------------------------------

def centered_diff(v: GridFn) -> GridFn:
    return GridFn(v.spec, d1(v.values, v.spec.h))


def second_diff(v: GridFn) -> GridFn:
    return GridFn(v.spec, d2(v.values, v.spec.h))


def psi(u: GridFn, v: GridFn) -> GridFn:
    """Skew-compatible bilinear transport operator.

    ``psi(u, v)_i = (u_i * (Dv)_i + D(uv)_i) / 3`` with ``D`` the centered
    difference; it satisfies ``(psi(u, v), v) == 0`` for every ``u``.
    """
    spec = _shared_spec(u, v)
    return GridFn(spec, psi_values(u.values, v.values, spec.h))


def inner(u: GridFn, v: GridFn) -> float:
    """Discrete L2 inner product ``h * sum(u_i v_i)``."""
    spec = _shared_spec(u, v)
    return float(spec.h * np.dot(u.values, v.values))


def inner_h1(u: GridFn, v: GridFn) -> float:
    """Half-grid inner product of the one-sided differences of ``u`` and ``v``."""
    spec = _shared_spec(u, v)
    h = spec.h
    return float(h * np.dot(backward(u.values, h), backward(v.values, h)))


def norm_values(v: np.ndarray, h: float) -> tuple[float, float, float]:
    """``(l2, h1_semi, linf)`` of a raw periodic array with spacing ``h``."""
    v = np.asarray(v, dtype=float)
    l2 = np.sqrt(h * np.dot(v, v))
    dv = backward(v, h)
    h1 = np.sqrt(h * np.dot(dv, dv))
    return float(l2), float(h1), float(np.max(np.abs(v)))


def norms(v: GridFn) -> tuple[float, float, float]:
    """Return ``(l2, h1_semi, linf)`` of ``v``."""
    return norm_values(v.values, v.spec.h)
