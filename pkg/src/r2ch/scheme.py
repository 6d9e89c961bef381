"""Two-level conservative time stepping.

One step advances ``(u^n, rho^n)`` by solving for the midpoint pair
``u = (u^n + u^{n+1}) / 2``, ``rho = (rho^n + rho^{n+1}) / 2`` of::

    (2/tau)(u - u^n) - (2/tau) D2 (u - u^n) - kappa D1 u + 3 psi(u, u)
        - 3 sigma psi(D2 u, u) + mu D1 D2 u
        + (1 - 2 omega kappa) rho D1 rho - 2 omega rho D1(rho u) = 0
    (2/tau)(rho - rho^n) + D1(rho u) = 0

``picard_step`` freezes the nonlinear coefficients at the previous iterate,
which leaves a linear 2M x 2M system per iteration; ``newton_step`` solves
the same equations by Newton's method with an analytic sparse Jacobian and
exists to cross-check the Picard path.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import invariants
from .cyclic import CyclicBandSystem, solve
from .grid import GridFn, GridMismatchError, GridSpec, d1, d2, psi_values
from .model import PhysParams, SolverCfg, State, TimeGrid

log = logging.getLogger(__name__)


class StepError(RuntimeError):
    """A time step failed to converge (or its linear solve failed)."""

    def __init__(self, message: str, increment: float = float("nan"), step: int | None = None):
        self.increment = increment
        self.step = step
        super().__init__(message if step is None else f"step {step}: {message}")


class UniquenessWarning(UserWarning):
    """``tau * max|u_mid| / (2h) >= 1``: the elevation update may not be unique."""

    def __init__(self, ratio: float, t: float):
        self.ratio = ratio
        self.t = t
        super().__init__(f"uniqueness ratio {ratio:.3g} >= 1 at t = {t:.6g}")


# -- Picard linearisation -------------------------------------------------

def _picard_diagonals(un, rn, w, r, h, p: PhysParams, tau):
    """Interleaved periodic diagonals and rhs of one Picard system.

    Unknown ``2i`` is ``u_i``, unknown ``2i + 1`` is ``rho_i``.
    """
    M = un.shape[0]
    c = 2.0 / tau
    ih = 1.0 / h
    ih2 = ih * ih
    ih3 = ih2 * ih
    g = d2(w, h)
    w_p, w_m = np.roll(w, -1), np.roll(w, 1)
    g_p, g_m = np.roll(g, -1), np.roll(g, 1)
    r_p, r_m = np.roll(r, -1), np.roll(r, 1)
    sf = p.shear_factor

    # Coefficients of u_{i+d} in the momentum row.
    au0 = np.full(M, c * (1.0 + 2.0 * ih2))
    au_p1 = (-c * ih2 - 0.5 * p.kappa * ih + 0.5 * ih * (w + w_p)
             - 0.5 * p.sigma * ih * (g + g_p) - p.mu * ih3 - p.omega * ih * r * r_p)
    au_m1 = (-c * ih2 + 0.5 * p.kappa * ih - 0.5 * ih * (w + w_m)
             + 0.5 * p.sigma * ih * (g + g_m) + p.mu * ih3 + p.omega * ih * r * r_m)
    au_p2 = 0.5 * p.mu * ih3
    # Coefficients of rho_{i+-1} in the momentum row.
    ar_p1 = 0.5 * sf * ih * r
    # Coefficients of u_{i+-1} in the continuity row.
    bu_p1 = 0.5 * ih * r_p
    bu_m1 = -0.5 * ih * r_m

    n = 2 * M
    diag = {k: np.zeros(n) for k in range(-4, 5)}
    diag[-4][0::2] = -au_p2
    diag[-3][1::2] = bu_m1
    diag[-2][0::2] = au_m1
    diag[-1][0::2] = -ar_p1
    diag[0][0::2] = au0
    diag[0][1::2] = c
    diag[1][1::2] = bu_p1
    diag[2][0::2] = au_p1
    diag[3][0::2] = ar_p1
    diag[4][0::2] = au_p2

    rhs = np.empty(n)
    rhs[0::2] = c * (un - d2(un, h))
    rhs[1::2] = c * rn
    return diag, rhs


def assemble_picard_system(prev: State, iterate: State, p: PhysParams, tau: float) -> CyclicBandSystem:
    """Linear system for the next Picard iterate, unknowns interleaved ``(u_i, rho_i)``."""
    if prev.grid != iterate.grid:
        raise GridMismatchError("previous level and iterate live on different grids")
    if tau == 0 or not np.isfinite(tau):
        raise ValueError(f"time step must be finite and nonzero, got {tau}")
    diag, rhs = _picard_diagonals(
        prev.u.values, prev.rho.values, iterate.u.values, iterate.rho.values, prev.grid.h, p, tau
    )
    return CyclicBandSystem.from_diagonals(diag, rhs)


def picard_step(prev: State, p: PhysParams, tau: float, cfg: SolverCfg | None = None) -> tuple[State, int]:
    """Advance one step by fixed-point iteration on the linearised system.

    Starts from the current level, iterates until successive midpoint
    iterates differ by at most ``cfg.picard_tol`` in max norm, then
    extrapolates ``x^{n+1} = 2 x_mid - x^n``.  Negative ``tau`` steps
    backwards in time.
    """
    cfg = cfg or SolverCfg()
    grid = prev.grid
    un, rn = prev.u.values, prev.rho.values
    w, r = un, rn
    incr = float("inf")
    for it in range(1, cfg.max_picard_iters + 1):
        diag, rhs = _picard_diagonals(un, rn, w, r, grid.h, p, tau)
        x = solve(CyclicBandSystem.from_diagonals(diag, rhs))
        w_new, r_new = x[0::2], x[1::2]
        incr = max(np.max(np.abs(w_new - w)), np.max(np.abs(r_new - r)))
        w, r = w_new, r_new
        if not np.isfinite(incr):
            break
        if incr <= cfg.picard_tol:
            nxt = State.from_arrays(grid, 2.0 * w - un, 2.0 * r - rn, prev.t + tau)
            return nxt, it
    raise StepError(
        f"Picard iteration did not reach {cfg.picard_tol:g} in {cfg.max_picard_iters} "
        f"iterations (last increment {incr:.3e})",
        increment=float(incr),
    )


# -- Newton oracle --------------------------------------------------------

def _diff_matrices(M: int, h: float):
    e = np.ones(M)
    shift_p = sp.diags([e[:-1], e[:1]], [1, -(M - 1)], shape=(M, M), format="csr")
    shift_m = shift_p.T.tocsr()
    I = sp.identity(M, format="csr")
    D1 = (shift_p - shift_m) / (2.0 * h)
    D2 = (shift_p - 2.0 * I + shift_m) / (h * h)
    return I, D1, D2


def midpoint_residual(u: np.ndarray, rho: np.ndarray, prev: State, p: PhysParams, tau: float) -> np.ndarray:
    """Residual of the midpoint equations, stacked as ``[momentum; continuity]``."""
    h = prev.grid.h
    un, rn = prev.u.values, prev.rho.values
    c = 2.0 / tau
    g = d2(u, h)
    ra = (c * (u - un) - c * (g - d2(un, h)) - p.kappa * d1(u, h)
          + 3.0 * psi_values(u, u, h) - 3.0 * p.sigma * psi_values(g, u, h)
          + p.mu * d1(g, h) + p.shear_factor * rho * d1(rho, h)
          - 2.0 * p.omega * rho * d1(rho * u, h))
    rb = c * (rho - rn) + d1(rho * u, h)
    return np.concatenate([ra, rb])


def midpoint_jacobian(u: np.ndarray, rho: np.ndarray, h: float, p: PhysParams, tau: float) -> sp.csr_matrix:
    """Analytic Jacobian of :func:`midpoint_residual` with respect to ``[u; rho]``."""
    M = u.shape[0]
    I, D1, D2 = _diff_matrices(M, h)
    c = 2.0 / tau
    dg = sp.diags
    g = d2(u, h)
    ru = rho * u
    # 3 psi(u, u) = u D1 u + D1(u^2)
    J_adv = dg(D1 @ u) + dg(u) @ D1 + 2.0 * D1 @ dg(u)
    # 3 psi(D2 u, u) = g D1 u + D1(g u), g = D2 u
    J_bal = dg(D1 @ u) @ D2 + dg(g) @ D1 + D1 @ (dg(u) @ D2 + dg(g))
    J_uu = (c * (I - D2) - p.kappa * D1 + J_adv - p.sigma * J_bal + p.mu * D1 @ D2
            - 2.0 * p.omega * dg(rho) @ D1 @ dg(rho))
    J_ur = (p.shear_factor * (dg(D1 @ rho) + dg(rho) @ D1)
            - 2.0 * p.omega * (dg(D1 @ ru) + dg(rho) @ D1 @ dg(u)))
    J_ru = D1 @ dg(rho)
    J_rr = c * I + D1 @ dg(u)
    return sp.bmat([[J_uu, J_ur], [J_ru, J_rr]], format="csc")


def fd_jacobian(u: np.ndarray, rho: np.ndarray, prev: State, p: PhysParams, tau: float,
                rel_step: float = 1e-7) -> np.ndarray:
    """Column-by-column forward-difference Jacobian (dense; for validation only)."""
    x = np.concatenate([u, rho])
    M = u.shape[0]
    f0 = midpoint_residual(u, rho, prev, p, tau)
    J = np.empty((2 * M, 2 * M))
    scale = max(1.0, float(np.max(np.abs(x))))
    for j in range(2 * M):
        dx = rel_step * scale
        xp = x.copy()
        xp[j] += dx
        J[:, j] = (midpoint_residual(xp[:M], xp[M:], prev, p, tau) - f0) / dx
    return J


def newton_step(prev: State, p: PhysParams, tau: float, cfg: SolverCfg | None = None) -> State:
    """Advance one step by Newton's method on the midpoint equations."""
    cfg = cfg or SolverCfg()
    grid = prev.grid
    M = grid.M
    un, rn = prev.u.values, prev.rho.values
    u, rho = un.copy(), rn.copy()
    res = midpoint_residual(u, rho, prev, p, tau)
    for _ in range(cfg.max_newton_iters):
        if np.max(np.abs(res)) <= cfg.newton_tol:
            return State.from_arrays(grid, 2.0 * u - un, 2.0 * rho - rn, prev.t + tau)
        J = midpoint_jacobian(u, rho, grid.h, p, tau)
        dx = spsolve(J, -res)
        u = u + dx[:M]
        rho = rho + dx[M:]
        res = midpoint_residual(u, rho, prev, p, tau)
        if not np.all(np.isfinite(res)):
            break
    if np.max(np.abs(res)) <= cfg.newton_tol:
        return State.from_arrays(grid, 2.0 * u - un, 2.0 * rho - rn, prev.t + tau)
    raise StepError(
        f"Newton iteration did not reach residual {cfg.newton_tol:g} in "
        f"{cfg.max_newton_iters} iterations (residual {np.max(np.abs(res)):.3e})",
        increment=float(np.max(np.abs(res))),
    )


# -- uniqueness monitor ---------------------------------------------------

def uniqueness_ratio(u_mid: GridFn, tau: float) -> float:
    return abs(tau) * float(np.max(np.abs(u_mid.values))) / (2.0 * u_mid.spec.h)


def uniqueness_guard(u_mid: GridFn, tau: float, t: float = 0.0) -> UniquenessWarning | None:
    """Return a warning object when the elevation update may lose uniqueness."""
    r = uniqueness_ratio(u_mid, tau)
    if r >= 1.0:
        return UniquenessWarning(r, t)
    return None


# -- time loop ------------------------------------------------------------

Observer = Callable[[int, State, int], None]


@dataclass
class Trajectory:
    """Result of :func:`run`.

    ``u`` and ``rho`` hold the full ``(N + 1, M)`` field history only when
    the run was asked to keep it; ``snapshots`` maps requested times to states.
    """

    grid: GridSpec
    params: PhysParams
    time_grid: TimeGrid
    final: State
    invariants: list[invariants.InvariantSample] = field(default_factory=list)
    u: np.ndarray | None = None
    rho: np.ndarray | None = None
    snapshots: dict[float, State] = field(default_factory=dict)
    warnings: list[UniquenessWarning] = field(default_factory=list)

    @property
    def max_picard_iters(self) -> int:
        return max((s.picard_iters for s in self.invariants), default=0)


def _snapshot_steps(times: Iterable[float], tg: TimeGrid) -> dict[int, float]:
    steps = {}
    for t in times:
        if t < 0 or t > tg.T * (1 + 1e-12):
            raise ValueError(f"snapshot time {t} outside [0, {tg.T}]")
        n = int(round(t / tg.tau))
        if abs(n * tg.tau - t) > 1e-9 * max(1.0, tg.T):
            raise ValueError(f"snapshot time {t} is not a multiple of tau = {tg.tau}")
        steps[n] = float(t)
    return steps


def run(init: State, p: PhysParams, tg: TimeGrid, cfg: SolverCfg | None = None,
        observers: Sequence[Observer] = (), *, store_fields: bool = False,
        record_invariants: bool = True, snapshot_times: Iterable[float] = ()) -> Trajectory:
    """Apply ``tg.N`` Picard steps starting from ``init``.

    After every step the built-in recorders run (invariants, optional full
    fields, snapshots, uniqueness check), followed by ``observers`` called as
    ``observer(step_index, state, picard_iters)``.
    """
    cfg = cfg or SolverCfg()
    if init.t != 0.0:
        raise ValueError(f"initial state must sit at t = 0, got {init.t}")
    grid = init.grid
    tau = tg.tau
    snaps = _snapshot_steps(snapshot_times, tg)
    traj = Trajectory(grid, p, tg, init)
    if store_fields:
        traj.u = np.empty((tg.N + 1, grid.M))
        traj.rho = np.empty((tg.N + 1, grid.M))

    def record(n: int, s: State, iters: int) -> None:
        if record_invariants:
            traj.invariants.append(invariants.sample(s, p, iters))
        if store_fields:
            traj.u[n] = s.u.values
            traj.rho[n] = s.rho.values
        if n in snaps:
            traj.snapshots[snaps[n]] = s
        for obs in observers:
            obs(n, s, iters)

    state = init
    record(0, state, 0)
    for n in range(1, tg.N + 1):
        try:
            nxt, iters = picard_step(state, p, tau, cfg)
        except (StepError, np.linalg.LinAlgError) as exc:
            raise StepError(str(exc), getattr(exc, "increment", float("nan")), step=n) from exc
        # Exact time stamp, free of accumulated round-off.
        nxt = State(nxt.u, nxt.rho, tg.t(n))
        u_mid = GridFn(grid, 0.5 * (state.u.values + nxt.u.values))
        warn = uniqueness_guard(u_mid, tau, nxt.t)
        if warn is not None:
            traj.warnings.append(warn)
            warnings.warn(warn, stacklevel=2)
        state = nxt
        record(n, state, iters)
    traj.final = state
    return traj
