"""Benchmark cases, grid-doubling error norms and convergence studies.

There is no closed-form solution for the benchmarks, so errors are measured
between a run and its refinement: coarse node ``i`` coincides with fine
node ``2i`` (space) and coarse level ``k`` with fine level ``2k`` (time).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .grid import GridSpec
from .model import PhysParams, SolverCfg, State, TimeGrid
from .scheme import Trajectory, run

EARTH_OMEGA = 73e-6
INIT_KINDS = ("dam_break", "peakon", "zero")


@dataclass(frozen=True)
class CasePreset:
    """One benchmark configuration.

    ``init`` is ``"dam_break"`` (uses ``a``), ``"peakon"`` or ``"zero"``.  ``h`` and
    ``tau`` are the default resolution used when a run does not override them.
    """

    name: str
    init: str
    x_left: float
    L: float
    T: float
    params: PhysParams
    a: float = 0.0
    h: float = 0.2
    tau: float = 1 / 256
    snapshot_times: tuple[float, ...] = ()

    def grid(self, h: float | None = None) -> GridSpec:
        return GridSpec.from_spacing(self.x_left, self.L, self.h if h is None else h)

    def time_grid(self, tau: float | None = None, T: float | None = None) -> TimeGrid:
        return TimeGrid.from_step(self.T if T is None else T, self.tau if tau is None else tau)

    def initial_state(self, grid: GridSpec) -> State:
        if self.init == "dam_break":
            return init_dam_break(self.a, grid)
        if self.init == "peakon":
            return init_peakon_antipeakon(grid)
        if self.init == "zero":
            return State.zeros(grid)
        raise ValueError(f"unknown initial condition {self.init!r}")


def _dam(name, a, half, T, params, **kw):
    return CasePreset(name, "dam_break", -half, 2 * half, T, params, a=a, **kw)


def _peakon(name, params):
    return CasePreset(name, "peakon", -20.0, 40.0, 8.0, params, h=0.1, tau=0.01,
                      snapshot_times=(1.0, 3.0, 6.0, 8.0))


CATALOG: dict[str, CasePreset] = {
    c.name: c
    for c in (
        _dam("exA51", 0.1, 6.0, 20.0, PhysParams(kappa=0, sigma=1, mu=0, omega=0)),
        _dam("exB51", 4.0, 12 * math.pi, 2.0, PhysParams(kappa=0, sigma=1, mu=0, omega=0)),
        _dam("exC51", 0.2, 8.0, 1.0, PhysParams(kappa=0, sigma=1, mu=1, omega=EARTH_OMEGA), h=0.1),
        _dam("exD51", 1.0, 8.0, 1.0, PhysParams(kappa=1, sigma=1, mu=1, omega=EARTH_OMEGA)),
        _dam("exE51", 1.0, 12 * math.pi, 50.0, PhysParams(kappa=0, sigma=1, mu=1, omega=EARTH_OMEGA),
             h=1 / 16, tau=1 / 20, snapshot_times=(0.0, 10.0, 20.0, 30.0, 40.0, 50.0)),
        _dam("exF51", 1.0, 100.0, 1000.0, PhysParams(kappa=1, sigma=1, mu=1, omega=EARTH_OMEGA),
             h=0.1, tau=1 / 50, snapshot_times=(0.0, 250.0, 500.0, 750.0, 1000.0)),
        _peakon("exA52", PhysParams(kappa=0, sigma=1, mu=0, omega=0)),
        _peakon("exB52", PhysParams(kappa=0, sigma=1, mu=0, omega=0.2)),
        _peakon("exC52", PhysParams(kappa=0, sigma=1, mu=0, omega=EARTH_OMEGA)),
        _peakon("exD52", PhysParams(kappa=1, sigma=1, mu=0, omega=EARTH_OMEGA)),
        _peakon("exE52", PhysParams(kappa=1, sigma=1, mu=1, omega=EARTH_OMEGA)),
    )
}


def get_case(name: str) -> CasePreset:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown case {name!r}; known: {', '.join(CATALOG)}") from None


def init_dam_break(a: float, grid: GridSpec) -> State:
    x = grid.x
    return State.from_arrays(grid, np.zeros(grid.M), 1.0 + np.tanh(x + a) - np.tanh(x - a))


def init_peakon_antipeakon(grid: GridSpec) -> State:
    x = grid.x
    u = np.exp(-np.abs(x - 5.0)) - np.exp(-np.abs(x + 5.0))
    return State.from_arrays(grid, u, np.full(grid.M, 0.5))


# -- grid-doubling errors -------------------------------------------------

class AlignmentError(ValueError):
    """Two trajectories cannot be compared node-for-node."""


def _require_fields(traj: Trajectory) -> None:
    if traj.u is None or traj.rho is None:
        raise AlignmentError("trajectory was run without full field storage")


def refine_error(coarse: Trajectory, fine: Trajectory, space_factor: int = 1,
                 time_factor: int = 1) -> tuple[float, float]:
    """Max-in-time errors of ``coarse`` against a refined run.

    Fine node ``f*i`` and fine level ``g*k`` are compared with coarse node
    ``i`` and level ``k``.  Returns ``(max |du|, max_k ||drho||_2)`` where the
    L2 norm uses the coarse spacing.
    """
    _require_fields(coarse)
    _require_fields(fine)
    gc, gf = coarse.grid, fine.grid
    if gf.M != space_factor * gc.M or not math.isclose(gf.L, gc.L) or not math.isclose(gf.x_left, gc.x_left):
        raise AlignmentError(f"fine grid M={gf.M} is not a {space_factor}x refinement of M={gc.M}")
    if fine.time_grid.N != time_factor * coarse.time_grid.N or not math.isclose(
            fine.time_grid.T, coarse.time_grid.T):
        raise AlignmentError(
            f"fine run N={fine.time_grid.N} is not a {time_factor}x refinement of N={coarse.time_grid.N}")
    f, g = space_factor, time_factor
    du = coarse.u - fine.u[::g, f - 1::f]
    dr = coarse.rho - fine.rho[::g, f - 1::f]
    err_u = float(np.max(np.abs(du)))
    err_rho = float(np.max(np.sqrt(gc.h * np.sum(dr * dr, axis=1))))
    return err_u, err_rho


def refine_error_space(coarse: Trajectory, fine: Trajectory) -> tuple[float, float]:
    return refine_error(coarse, fine, space_factor=2, time_factor=1)


def refine_error_time(coarse: Trajectory, fine: Trajectory) -> tuple[float, float]:
    return refine_error(coarse, fine, space_factor=1, time_factor=2)


def convergence_order(err_coarse: float, err_fine: float) -> float:
    """``log2(err_coarse / err_fine)``."""
    if not (err_coarse > 0 and err_fine > 0):
        raise ValueError(f"errors must be positive, got {err_coarse}, {err_fine}")
    return math.log2(err_coarse / err_fine)


@dataclass(frozen=True)
class ConvergenceRow:
    """One line of a convergence table.

    ``degenerate`` marks rows whose errors are at round-off level (e.g. a
    steady state); such rows, and the row after them, carry no orders.
    """

    step: float
    err_u_inf: float
    ord_u: float | None
    err_rho_l2: float
    ord_rho: float | None
    degenerate: bool = False


# Errors below this multiple of the field magnitude are treated as round-off.
ROUNDOFF_RTOL = 1e-13


class StudyError(RuntimeError):
    def __init__(self, message: str, rows: list[ConvergenceRow]):
        self.rows = rows
        super().__init__(message)


def _safe_order(a: float, b: float) -> float | None:
    try:
        return convergence_order(a, b)
    except ValueError:
        return None


def simulate(case: CasePreset, h: float | GridSpec, tau: float, cfg: SolverCfg | None = None,
             T: float | None = None, store_fields: bool = True) -> Trajectory:
    grid = h if isinstance(h, GridSpec) else case.grid(h)
    tg = case.time_grid(tau, T)
    return run(case.initial_state(grid), case.params, tg, cfg, store_fields=store_fields,
               record_invariants=not store_fields)


def _simulate_args(args):
    return simulate(*args)


def _map_runs(jobs: int, arglist):
    if jobs > 1 and len(arglist) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_simulate_args, arglist))
    return [_simulate_args(a) for a in arglist]


def run_convergence_study(case: CasePreset, axis: Literal["space", "time"], levels: int,
                          base_h: float, base_tau: float, cfg: SolverCfg | None = None,
                          jobs: int = 1, T: float | None = None) -> list[ConvergenceRow]:
    """Halve ``h`` (or ``tau``) ``levels`` times and tabulate errors and orders.

    Row ``k`` compares the run at step ``base / 2**k`` with the run at half
    that step, so ``levels + 1`` runs are made.  The first row carries no
    orders; rows whose errors vanish get ``None`` orders as well.
    """
    if levels < 2:
        raise ValueError(f"a convergence study needs at least 2 levels, got {levels}")
    if axis not in ("space", "time"):
        raise ValueError(f"axis must be 'space' or 'time', got {axis!r}")
    base_grid = case.grid(base_h)
    if axis == "space":
        arglist = [(case, base_grid.refined(2**k), base_tau, cfg, T) for k in range(levels + 1)]
        steps = [base_grid.h / 2**k for k in range(levels)]
        compare = refine_error_space
    else:
        arglist = [(case, base_grid, base_tau / 2**k, cfg, T) for k in range(levels + 1)]
        steps = [base_tau / 2**k for k in range(levels)]
        compare = refine_error_time

    rows: list[ConvergenceRow] = []
    try:
        if jobs > 1:
            trajs = _map_runs(jobs, arglist)
        else:
            trajs = []
            prev = None
            for k, args in enumerate(arglist):
                trajs.append(_simulate_args(args))
                if k >= 1:
                    rows.append(_row(steps[k - 1], compare(trajs[k - 1], trajs[k]), prev, trajs[k - 1]))
                    prev = rows[-1]
                    trajs[k - 1] = None  # release history
            return rows
    except Exception as exc:
        raise StudyError(f"convergence study aborted after {len(rows)} rows: {exc}", rows) from exc
    prev = None
    for k in range(levels):
        rows.append(_row(steps[k], compare(trajs[k], trajs[k + 1]), prev, trajs[k]))
        prev = rows[-1]
    return rows


def _row(step: float, errs: tuple[float, float], prev: ConvergenceRow | None,
         coarse: Trajectory) -> ConvergenceRow:
    eu, er = errs
    scale = 1.0 + max(float(np.max(np.abs(coarse.u))), float(np.max(np.abs(coarse.rho))))
    flat = eu <= ROUNDOFF_RTOL * scale and er <= ROUNDOFF_RTOL * scale * math.sqrt(coarse.grid.L)
    if prev is None or flat or prev.degenerate:
        return ConvergenceRow(step, eu, None, er, None, flat)
    return ConvergenceRow(step, eu, _safe_order(prev.err_u_inf, eu), er,
                          _safe_order(prev.err_rho_l2, er), flat)


def unconditional_probe(case: CasePreset, tau: float, base_h: float, halvings: int,
                        ref_h: float | None = None, ref_tau: float | None = None,
                        cfg: SolverCfg | None = None, T: float | None = None) -> list[tuple[float, float, float]]:
    """Errors at fixed ``tau`` as ``h`` shrinks, measured against a fine reference.

    The reference run uses ``ref_h`` (default: half the finest ``h``) and
    ``ref_tau`` (default: ``tau / 8``).  Returns ``(h, err_u_inf, err_rho_l2)``
    per spatial level.
    """
    base = case.grid(base_h)
    finest = base.refined(2**halvings)
    ref_grid = finest.refined(2) if ref_h is None else case.grid(ref_h)
    ref_tau = tau / 8 if ref_tau is None else ref_tau
    ref = simulate(case, ref_grid, ref_tau, cfg, T)
    out = []
    for k in range(halvings + 1):
        g = base.refined(2**k)
        traj = simulate(case, g, tau, cfg, T)
        sf = ref_grid.M // g.M
        tf = ref.time_grid.N // traj.time_grid.N
        eu, er = refine_error(traj, ref, sf, tf)
        out.append((g.h, eu, er))
    return out


def symmetry_probe(traj: Trajectory) -> float:
    """Largest odd-symmetry defect ``|u(x) + u(-x)|`` over the stored levels."""
    grid = traj.grid
    if grid.M % 2 or not math.isclose(grid.x_left, -grid.L / 2, rel_tol=0, abs_tol=1e-12 * grid.L):
        raise AlignmentError("grid is not symmetric about x = 0")
    M = grid.M
    mirror = (M - 2 - np.arange(M)) % M
    if traj.u is not None:
        levels = traj.u
    else:
        levels = np.array([s.u.values for s in (*traj.snapshots.values(), traj.final)])
    return float(np.max(np.abs(levels + levels[:, mirror])))
