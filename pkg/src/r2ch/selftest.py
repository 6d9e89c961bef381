"""Randomised checks of the discrete summation-by-parts identities.

Each identity ``lhs == 0`` is reported as ``|lhs| / scale`` where ``scale``
is the same pairing evaluated with every stencil weight and operand replaced
by its absolute value, i.e. the size of the terms that had to cancel.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .grid import backward, d1, d2, psi_values

IDENTITY_RTOL = 1e-12


def _abs_d1(w, h):
    return (np.roll(w, -1) + np.roll(w, 1)) / (2.0 * h)


def _abs_d2(w, h):
    return (np.roll(w, -1) + 2.0 * w + np.roll(w, 1)) / (h * h)


def sbp_defects(u: np.ndarray, v: np.ndarray, h: float) -> dict[str, float]:
    """Relative defects of the four pairing identities for one ``(u, v)``."""
    au, av = np.abs(u), np.abs(v)
    ip = lambda a, b: h * float(np.dot(a, b))

    out = {}
    lhs = ip(psi_values(u, v, h), v)
    scale = ip((au * _abs_d1(av, h) + _abs_d1(au * av, h)) / 3.0, av)
    out["psi_skew"] = abs(lhs) / scale if scale else abs(lhs)

    lhs = ip(d1(u, h), u)
    scale = ip(_abs_d1(au, h), au)
    out["d1_skew"] = abs(lhs) / scale if scale else abs(lhs)

    lhs = ip(d1(u, h), v) + ip(u, d1(v, h))
    scale = ip(_abs_d1(au, h), av) + ip(au, _abs_d1(av, h))
    out["d1_adjoint"] = abs(lhs) / scale if scale else abs(lhs)

    du, dv = backward(u, h), backward(v, h)
    lhs = ip(d2(u, h), v) + ip(du, dv)
    scale = ip(_abs_d2(au, h), av) + ip(np.abs(du), np.abs(dv))
    out["d2_adjoint"] = abs(lhs) / scale if scale else abs(lhs)
    return out


def two_level_defect(u0, u1, v0, v1, tau: float, h: float) -> float:
    """Relative mismatch of the two-level product identity.

    ``(dt u, u_mid v_mid)`` against
    ``[(u1, u1 v1) - (u0, u0 v0)] / 2tau - (du, du dt v) / 4 - (u1 u0, dt v) / 2``.
    """
    ip = lambda a, b: h * float(np.dot(a, b))
    dtu = (u1 - u0) / tau
    dtv = (v1 - v0) / tau
    du = u1 - u0
    lhs = ip(dtu, 0.25 * (u0 + u1) * (v0 + v1))
    rhs = ((ip(u1, u1 * v1) - ip(u0, u0 * v0)) / (2.0 * tau)
           - 0.25 * ip(du, du * dtv) - 0.5 * ip(u1 * u0, dtv))
    a = np.abs
    scale = (ip(a(dtu), 0.25 * (a(u0) + a(u1)) * (a(v0) + a(v1)))
             + (ip(a(u1), a(u1 * v1)) + ip(a(u0), a(u0 * v0))) / (2.0 * abs(tau))
             + 0.25 * ip(a(du), a(du * dtv)) + 0.5 * ip(a(u1 * u0), a(dtv)))
    return abs(lhs - rhs) / scale if scale else abs(lhs - rhs)


@dataclass
class SuiteResult:
    name: str
    cases: int
    worst: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.worst <= IDENTITY_RTOL

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.cases} cases, worst relative defect {self.worst:.2e} ({self.seconds:.2f} s)"


def _random_pair(rng, M):
    h = float(rng.uniform(0.01, 2.0))
    su, sv = 10.0 ** rng.uniform(-3, 3, size=2)
    u = su * rng.standard_normal(M) + rng.uniform(-1, 1) * su
    v = sv * rng.standard_normal(M) + rng.uniform(-1, 1) * sv
    return u, v, h


def identity_suite(pairs: int = 1000, sizes=(8, 64, 1024), seed: int = 0) -> list[SuiteResult]:
    """Check the four pairing identities on ``pairs`` random pairs spread over ``sizes``."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = {k: 0.0 for k in ("psi_skew", "d1_skew", "d1_adjoint", "d2_adjoint")}
    for k in range(pairs):
        M = sizes[k % len(sizes)]
        u, v, h = _random_pair(rng, M)
        for name, val in sbp_defects(u, v, h).items():
            worst[name] = max(worst[name], val)
    dt = time.perf_counter() - t0
    return [SuiteResult(name, pairs, w, dt) for name, w in worst.items()]


def two_level_suite(cases: int = 1000, seed: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(cases):
        M = int(rng.integers(4, 512))
        u0, u1, v0, v1 = rng.standard_normal((4, M)) * 10.0 ** rng.uniform(-2, 2, size=(4, 1))
        tau = float(10.0 ** rng.uniform(-4, 0))
        h = float(rng.uniform(0.01, 1.0))
        worst = max(worst, two_level_defect(u0, u1, v0, v1, tau, h))
    return SuiteResult("two_level_product", cases, worst, time.perf_counter() - t0)
