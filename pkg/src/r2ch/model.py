"""Parameter, time-grid and state containers shared by the stepper and the invariants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFn, GridMismatchError, GridSpec


@dataclass(frozen=True)
class PhysParams:
    """Model coefficients: shear flow ``kappa``, balance index ``sigma``,
    dispersion ``mu`` and rotation ``omega``."""

    kappa: float = 0.0
    sigma: float = 1.0
    mu: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        for name in ("kappa", "sigma", "mu", "omega"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 <= self.omega < 0.25:
            raise ValueError(f"omega must lie in [0, 1/4), got {self.omega}")
        if not self.shear_factor > 0:
            raise ValueError(
                f"1 - 2*omega*kappa must be positive, got {self.shear_factor} "
                f"(omega={self.omega}, kappa={self.kappa})"
            )

    @property
    def shear_factor(self) -> float:
        """``1 - 2 omega kappa``."""
        return 1.0 - 2.0 * self.omega * self.kappa


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"step count must be a positive integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "T", float(self.T))

    @classmethod
    def from_step(cls, T: float, tau: float) -> "TimeGrid":
        if not tau > 0:
            raise ValueError(f"time step must be positive, got {tau}")
        return cls(T, max(1, int(round(T / tau))))

    @property
    def tau(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        return n * self.tau


@dataclass(frozen=True)
class SolverCfg:
    picard_tol: float = 1e-12
    max_picard_iters: int = 100
    newton_tol: float = 1e-12
    max_newton_iters: int = 25

    def __post_init__(self):
        if not (self.picard_tol > 0 and self.newton_tol > 0):
            raise ValueError("solver tolerances must be positive")
        if self.max_picard_iters < 1 or self.max_newton_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass(frozen=True, eq=False)
class State:
    """Velocity ``u`` and surface elevation ``rho`` at time ``t``."""

    u: GridFn
    rho: GridFn
    t: float = 0.0

    def __post_init__(self):
        if self.u.spec != self.rho.spec:
            raise GridMismatchError("u and rho live on different grids")
        if not np.isfinite(self.t):
            raise ValueError("time stamp must be finite")

    @property
    def grid(self) -> GridSpec:
        return self.u.spec

    @classmethod
    def from_arrays(cls, grid: GridSpec, u, rho, t: float = 0.0) -> "State":
        return cls(GridFn(grid, u), GridFn(grid, rho), float(t))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "State":
        return cls(grid.zeros(), grid.zeros(), 0.0)
