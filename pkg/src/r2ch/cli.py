"""Batch command-line driver: config parsing, runs, convergence tables, CSV output.

Config files are line-oriented ``key = value`` text with ``#`` comments::

    case = exA51
    h = 0.2
    tau = 1/256
    T = 10
    snapshot_times = 2, 4, 6

Numbers accept plain decimals or simple fractions such as ``1/256``.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import sys
import time
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .experiments import CATALOG, INIT_KINDS, CasePreset, StudyError, run_convergence_study
from .grid import GridSpec
from .invariants import InvariantSample
from .model import PhysParams, SolverCfg, TimeGrid
from .scheme import StepError, Trajectory, UniquenessWarning, run
from .selftest import identity_suite, two_level_suite

log = logging.getLogger("r2ch")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Bad configuration; names the offending key and, when known, its line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key, self.line = key, line
        where = f"line {line}: " if line is not None else ""
        what = f"{key}: " if key else ""
        super().__init__(f"{where}{what}{message}")


@dataclass(frozen=True)
class RunConfig:
    case: str = "custom"
    init: str | None = None
    a: float = 0.0
    x_left: float | None = None
    L: float | None = None
    M: int | None = None
    h: float | None = None
    N: int | None = None
    tau: float | None = None
    T: float | None = None
    kappa: float = 0.0
    sigma: float = 1.0
    mu: float = 0.0
    omega: float = 0.0
    tol: float = 1e-12
    max_iter: int = 100
    snapshot_times: tuple[float, ...] = ()
    out_dir: str = "."
    emit_fields: bool = False

    @property
    def params(self) -> PhysParams:
        return PhysParams(kappa=self.kappa, sigma=self.sigma, mu=self.mu, omega=self.omega)

    @property
    def solver(self) -> SolverCfg:
        return SolverCfg(picard_tol=self.tol, max_picard_iters=self.max_iter)

    def grid(self) -> GridSpec:
        if self.M is not None:
            return GridSpec(self.x_left, self.L, self.M)
        return GridSpec.from_spacing(self.x_left, self.L, self.h)

    def time_grid(self) -> TimeGrid:
        if self.N is not None:
            return TimeGrid(self.T, self.N)
        return TimeGrid.from_step(self.T, self.tau)

    def to_case(self) -> CasePreset:
        g, tg = self.grid(), self.time_grid()
        return CasePreset(self.case, self.init, self.x_left, self.L, self.T, self.params, a=self.a,
                          h=g.h, tau=tg.tau, snapshot_times=self.snapshot_times)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_REAL = {"a", "x_left", "L", "h", "tau", "T", "kappa", "sigma", "mu", "omega", "tol"}
_INT = {"M", "N", "max_iter"}
_REQUIRED = ("init", "x_left", "L", "T")


def _real(text: str) -> float:
    try:
        val = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"expected a real number, got {text.strip()!r}") from None
    return val


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ValueError(f"expected an integer, got {text.strip()!r}") from None


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text.strip()!r}")


def _convert(key: str, raw: str):
    if key in _REAL:
        return _real(raw)
    if key in _INT:
        return _int(raw)
    if key == "snapshot_times":
        return tuple(_real(p) for p in raw.split(",") if p.strip())
    if key == "emit_fields":
        return _bool(raw)
    return raw.strip()


def _preset_values(case: CasePreset) -> dict:
    p = case.params
    return dict(init=case.init, a=case.a, x_left=case.x_left, L=case.L, h=case.h, tau=case.tau,
                T=case.T, kappa=p.kappa, sigma=p.sigma, mu=p.mu, omega=p.omega,
                snapshot_times=case.snapshot_times)


def parse_config(text: str, case: str | None = None) -> RunConfig:
    """Parse and validate ``key = value`` config text.

    ``case`` (e.g. from a command-line flag) acts as a ``case = ...`` line
    that the text may repeat but not contradict.
    """
    given: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", line=lineno)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key; known keys: {', '.join(_FIELDS)}", key, lineno)
        if key in given:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key, lineno)
        try:
            given[key] = _convert(key, value)
            _check_value(key, given[key])
        except ValueError as exc:
            raise ConfigError(str(exc), key, lineno) from None
        lines[key] = lineno

    if case is not None:
        if "case" in given and given["case"] != case:
            raise ConfigError(f"config says {given['case']!r} but {case!r} was requested",
                              "case", lines["case"])
        given["case"] = case

    values: dict[str, object] = {}
    name = given.get("case", None)
    if name is not None and name != "custom":
        if name not in CATALOG:
            raise ConfigError(f"unknown preset {name!r}; known: {', '.join(CATALOG)}, custom",
                              "case", lines.get("case"))
        values.update(_preset_values(CATALOG[name]))
    # An explicit M (or N) replaces the preset's h (or tau) rather than clashing with it.
    for a, b in (("M", "h"), ("N", "tau")):
        if a in given and b in given:
            raise ConfigError(f"give only one of {a} and {b}", a, lines[a])
        if a in given:
            values.pop(b, None)
        if b in given:
            values.pop(a, None)
    values.update(given)

    missing = [k for k in _REQUIRED if values.get(k) is None]
    if values.get("M") is None and values.get("h") is None:
        missing.append("M or h")
    if values.get("N") is None and values.get("tau") is None:
        missing.append("N or tau")
    if missing:
        hint = "" if name is not None else " (or set case to a preset)"
        raise ConfigError(f"missing required keys: {', '.join(missing)}{hint}")

    cfg = RunConfig(**values)
    _validate(cfg, lines)
    return cfg


def _check_value(key: str, v) -> None:
    """Constraints that depend on one key alone; raises ``ValueError``."""
    if key in _REAL and not math.isfinite(v):
        raise ValueError(f"must be finite, got {v}")
    if key == "init" and v not in INIT_KINDS:
        raise ValueError(f"must be one of {', '.join(INIT_KINDS)}, got {v!r}")
    if key in ("L", "T", "h", "tau", "tol", "sigma") and not v > 0:
        raise ValueError(f"must be positive, got {v}")
    if key == "M" and v < 4:
        raise ValueError(f"needs at least 4 nodes, got {v}")
    if key in ("N", "max_iter") and v < 1:
        raise ValueError(f"must be at least 1, got {v}")
    if key == "omega" and not 0 <= v < 0.25:
        raise ValueError(f"must lie in [0, 1/4), got {v}")
    if key == "snapshot_times" and any(not math.isfinite(t) for t in v):
        raise ValueError("times must be finite")


def _validate(cfg: RunConfig, lines: dict[str, int]) -> None:
    def fail(key, msg):
        raise ConfigError(msg, key, lines.get(key))

    for key in _FIELDS:
        v = getattr(cfg, key)
        if v is not None:
            try:
                _check_value(key, v)
            except ValueError as exc:
                fail(key, str(exc))
    if not 1 - 2 * cfg.omega * cfg.kappa > 0:
        fail("kappa" if "kappa" in lines else "omega", "1 - 2*omega*kappa must be positive")
    if cfg.h is not None and GridSpec.from_spacing(cfg.x_left, cfg.L, cfg.h).M < 4:
        fail("h", f"gives fewer than 4 nodes on a period of length {cfg.L}")
    tg = cfg.time_grid()
    for t in cfg.snapshot_times:
        if not 0 <= t <= cfg.T:
            fail("snapshot_times", f"{t} lies outside [0, {cfg.T}]")
        n = round(t / tg.tau)
        if abs(n * tg.tau - t) > 1e-9 * max(1.0, cfg.T):
            fail("snapshot_times", f"{t} is not a multiple of tau = {tg.tau}")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def emit_config(cfg: RunConfig) -> str:
    """Config text that :func:`parse_config` turns back into ``cfg``."""
    out = []
    for name in _FIELDS:
        v = getattr(cfg, name)
        if v is None:
            continue
        out.append(f"{name} = {_fmt(v)}")
    return "\n".join(out) + "\n"


# -- output ---------------------------------------------------------------

def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    log.debug("wrote %s", path)


def write_invariants(path: Path, samples: list[InvariantSample]) -> None:
    _write_csv(path, ["t", "E", "H", "I", "E_shift", "H_shift", "picard_iters"],
               ([_num(s.t), _num(s.E), _num(s.H), _num(s.I), _num(s.E_shift), _num(s.H_shift),
                 str(s.picard_iters)] for s in samples))


def snapshot_name(t: float) -> str:
    return f"snapshot_t{float(t)!r}.csv"


def write_snapshot(path: Path, grid: GridSpec, state) -> None:
    _write_csv(path, ["x", "u", "rho"],
               ([_num(x), _num(u), _num(r)] for x, u, r in zip(grid.x, state.u.values, state.rho.values)))


def write_fields(out: Path, traj: Trajectory) -> None:
    tg = traj.time_grid
    for name, arr in (("u", traj.u), ("rho", traj.rho)):
        _write_csv(out / f"{name}.csv", ["t"] + [_num(x) for x in traj.grid.x],
                   ([_num(tg.t(n))] + [_num(v) for v in row] for n, row in enumerate(arr)))


def write_orders(path: Path, rows) -> None:
    _write_csv(path, ["step", "err_u_inf", "ord_u", "err_rho_l2", "ord_rho"],
               ([_num(r.step), _num(r.err_u_inf), _num(r.ord_u), _num(r.err_rho_l2), _num(r.ord_rho)]
                for r in rows))


def gnuplot_script(files: list[str], kind: str) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead"]
    if kind == "orders":
        lines += ["set logscale xy", "set xlabel 'step'", "set ylabel 'error'"]
        for f in files:
            lines.append(f"plot '{f}' using 1:2 with linespoints, '' using 1:4 with linespoints")
    else:
        for f in files:
            if f == "invariants.csv":
                lines.append("set xlabel 't'")
                lines.append(f"plot '{f}' using 1:2 with lines, '' using 1:3 with lines, '' using 1:4 with lines")
            else:
                lines.append("set xlabel 'x'")
                lines.append(f"plot '{f}' using 1:2 with lines, '' using 1:3 with lines")
    lines.append("pause -1")
    return "\n".join(lines) + "\n"


def _prepare_out(out_dir: str) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


# -- commands -------------------------------------------------------------

def cmd_run(cfg: RunConfig, *, snapshots: bool = True, gnuplot: bool = False) -> int:
    out = _prepare_out(cfg.out_dir)
    case = cfg.to_case()
    grid, tg = cfg.grid(), cfg.time_grid()
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UniquenessWarning)
        traj = run(case.initial_state(grid), cfg.params, tg, cfg.solver, store_fields=cfg.emit_fields,
                   snapshot_times=cfg.snapshot_times if snapshots else ())
    wall = time.perf_counter() - t0
    if traj.warnings:
        log.info("%d steps tripped the uniqueness monitor", len(traj.warnings))

    files = ["invariants.csv"]
    write_invariants(out / "invariants.csv", traj.invariants)
    if snapshots:
        for t, s in sorted(traj.snapshots.items()):
            files.append(snapshot_name(t))
            write_snapshot(out / files[-1], grid, s)
        if cfg.emit_fields:
            write_fields(out, traj)
    if gnuplot:
        (out / "plot.gp").write_text(gnuplot_script(files, "run"))

    first, last = traj.invariants[0], traj.invariants[-1]
    drift = {k: getattr(last, k) - getattr(first, k) for k in ("E", "H", "I")}
    print(f"{cfg.case}: M={grid.M} N={tg.N} T={tg.T:g} "
          + " ".join(f"d{k}={v:.3e}" for k, v in drift.items())
          + f" max_picard={traj.max_picard_iters} uniqueness_warnings={len(traj.warnings)}"
          + f" wall={wall:.2f}s")
    return EXIT_OK


def cmd_converge(cfg: RunConfig, axis: str, levels: int, jobs: int = 1, gnuplot: bool = False) -> int:
    if levels < 2:
        raise ConfigError(f"a convergence study needs at least 2 levels, got {levels}", "levels")
    out = _prepare_out(cfg.out_dir)
    case = cfg.to_case()
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UniquenessWarning)
        rows = run_convergence_study(case, axis, levels, cfg.grid().h, cfg.time_grid().tau,
                                     cfg.solver, jobs=jobs)
    name = f"orders_{axis}.csv"
    write_orders(out / name, rows)
    if gnuplot:
        (out / "plot.gp").write_text(gnuplot_script([name], "orders"))
    last = rows[-1]
    print(f"{cfg.case} {axis}: {levels} levels, final err_u_inf={last.err_u_inf:.4e} "
          f"ord_u={_num(last.ord_u) or '-'} wall={time.perf_counter() - t0:.2f}s")
    return EXIT_OK


def cmd_selftest() -> int:
    results = [*identity_suite(), two_level_suite()]
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="r2ch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = value config file")
        p.add_argument("--case", help=f"preset name ({', '.join(CATALOG)})")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--gnuplot-script", action="store_true", help="also write plot.gp")

    common(sub.add_parser("run", help="run a case, write invariants and snapshots"))
    common(sub.add_parser("invariants", help="run a case, write invariants.csv only"))
    pc = sub.add_parser("converge", help="grid-doubling convergence table")
    common(pc)
    pc.add_argument("--axis", choices=("space", "time"), required=True)
    pc.add_argument("--levels", type=int, default=5)
    pc.add_argument("--jobs", type=int, default=1)
    sub.add_parser("selftest", help="check the discrete operator identities")
    return ap


def _load_config(args) -> RunConfig:
    text = args.config.read_text() if args.config else ""
    cfg = parse_config(text, case=args.case)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("R2CH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            return cmd_selftest()
        if args.command == "converge" and args.levels < 2:
            print(f"r2ch: error: --levels must be at least 2, got {args.levels}", file=sys.stderr)
            return EXIT_USAGE
        cfg = _load_config(args)
        if args.command == "run":
            return cmd_run(cfg, gnuplot=args.gnuplot_script)
        if args.command == "invariants":
            return cmd_run(cfg, snapshots=False, gnuplot=args.gnuplot_script)
        return cmd_converge(cfg, args.axis, args.levels, args.jobs, args.gnuplot_script)
    except (ConfigError, OSError) as exc:
        print(f"r2ch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StepError, StudyError) as exc:
        print(f"r2ch: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
