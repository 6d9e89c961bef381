"""Banded linear systems with periodic corner blocks.

A cyclic banded matrix has nonzeros on the diagonals ``-lower_bw ..
upper_bw`` taken modulo ``n``, so the rows near the top reach the last
columns and vice versa.  ``solve`` factors the plain band with LAPACK
``gbtrf`` and folds the two corner blocks back in through a
Sherman-Morrison-Woodbury correction of rank ``lower_bw + upper_bw``.
The dense LU path (``solve_dense``) is both the test oracle and the
fallback when the band factorisation is not trustworthy.

Band storage follows LAPACK: ``bands[upper_bw + i - j, j] == A[i, j]``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

log = logging.getLogger(__name__)

PIVOT_RTOL = 1e-14
# Normwise backward error above which the Woodbury result is refined.
BACKWARD_RTOL = 1e-14


class SingularSystemError(np.linalg.LinAlgError):
    """Factorisation hit a pivot below ``PIVOT_RTOL`` times its row scale."""

    def __init__(self, index: int, pivot: float, scale: float):
        self.index = index
        self.pivot = pivot
        self.scale = scale
        super().__init__(
            f"pivot {pivot:.3e} at index {index} is below {PIVOT_RTOL:g} x row scale {scale:.3e}"
        )


@dataclass
class CyclicBandSystem:
    """``A x = rhs`` with ``A`` banded plus periodic wrap-around corners.

    ``wrap_upper`` is the top-right block ``A[:lower_bw, n - lower_bw:]``
    (lower diagonals wrapped past column 0), ``wrap_lower`` the bottom-left
    block ``A[n - upper_bw:, :upper_bw]``.  Entries of those blocks that
    also fall inside the band are kept in ``bands`` and left zero here.
    """

    n: int
    lower_bw: int
    upper_bw: int
    bands: np.ndarray
    wrap_upper: np.ndarray
    wrap_lower: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        kl, ku, n = self.lower_bw, self.upper_bw, self.n
        if self.bands.shape != (kl + ku + 1, n):
            raise ValueError(f"bands must have shape {(kl + ku + 1, n)}, got {self.bands.shape}")
        if self.wrap_upper.shape != (kl, kl) or self.wrap_lower.shape != (ku, ku):
            raise ValueError("corner blocks have the wrong shape")
        if self.rhs.shape != (n,):
            raise ValueError(f"rhs must have length {n}")
        for name in ("bands", "wrap_upper", "wrap_lower", "rhs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @classmethod
    def from_diagonals(cls, diagonals: dict[int, np.ndarray], rhs: np.ndarray) -> "CyclicBandSystem":
        """Build from periodic diagonals.

        ``diagonals[d][i]`` is the coefficient in row ``i`` of column
        ``(i + d) mod n``.  Entries landing on the same cell are summed,
        which matters only when ``n`` is small compared to the bandwidth.
        """
        rhs = np.asarray(rhs, dtype=float)
        n = rhs.shape[0]
        kl = max(0, -min(diagonals))
        ku = max(0, max(diagonals))
        if kl >= n or ku >= n:
            raise ValueError(f"bandwidth ({kl}, {ku}) too large for n = {n}")
        bands = np.zeros((kl + ku + 1, n))
        wrap_upper = np.zeros((kl, kl))
        wrap_lower = np.zeros((ku, ku))
        rows = np.arange(n)
        for d, coeff in diagonals.items():
            coeff = np.broadcast_to(np.asarray(coeff, dtype=float), (n,))
            cols = (rows + d) % n
            off = cols - rows
            in_band = (off >= -kl) & (off <= ku)
            # Rows are distinct within one diagonal, so the targets are too.
            bands[ku - off[in_band], cols[in_band]] += coeff[in_band]
            up = off > ku
            wrap_upper[rows[up], cols[up] - (n - kl)] += coeff[up]
            lo = off < -kl
            wrap_lower[rows[lo] - (n - ku), cols[lo]] += coeff[lo]
        return cls(n, kl, ku, bands, wrap_upper, wrap_lower, rhs)

    @classmethod
    def from_dense(cls, A: np.ndarray, rhs: np.ndarray, lower_bw: int, upper_bw: int) -> "CyclicBandSystem":
        """Extract a cyclic banded system from a dense matrix (no entry may fall outside)."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        diagonals = {}
        rows = np.arange(n)
        for d in range(-lower_bw, upper_bw + 1):
            diagonals[d] = A[rows, (rows + d) % n]
        sys = cls.from_diagonals(diagonals, rhs)
        if not np.array_equal(sys.to_dense(), A):
            raise ValueError("matrix has entries outside the cyclic band")
        return sys

    def to_dense(self) -> np.ndarray:
        n, kl, ku = self.n, self.lower_bw, self.upper_bw
        A = np.zeros((n, n))
        for k in range(kl + ku + 1):
            off = ku - k  # column - row
            j = np.arange(max(0, off), min(n, n + off))
            A[j - off, j] += self.bands[k, j]
        A[:kl, n - kl:] += self.wrap_upper
        A[n - ku:, :ku] += self.wrap_lower
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n, kl, ku = self.n, self.lower_bw, self.upper_bw
        y = np.zeros(n)
        for k in range(kl + ku + 1):
            off = ku - k
            j = np.arange(max(0, off), min(n, n + off))
            y[j - off] += self.bands[k, j] * x[j]
        if kl:
            y[:kl] += self.wrap_upper @ x[n - kl:]
        if ku:
            y[n - ku:] += self.wrap_lower @ x[:ku]
        return y

    def abs_row_sums(self) -> np.ndarray:
        n, kl, ku = self.n, self.lower_bw, self.upper_bw
        out = np.zeros(n)
        for k in range(kl + ku + 1):
            off = ku - k
            j = np.arange(max(0, off), min(n, n + off))
            out[j - off] += np.abs(self.bands[k, j])
        if kl:
            out[:kl] += np.abs(self.wrap_upper).sum(axis=1)
        if ku:
            out[n - ku:] += np.abs(self.wrap_lower).sum(axis=1)
        return out

    def row_scale(self) -> np.ndarray:
        """Largest absolute entry in each row."""
        n, kl, ku = self.n, self.lower_bw, self.upper_bw
        scale = np.zeros(n)
        for k in range(kl + ku + 1):
            off = ku - k
            j = np.arange(max(0, off), min(n, n + off))
            np.maximum.at(scale, j - off, np.abs(self.bands[k, j]))
        if kl:
            scale[:kl] = np.maximum(scale[:kl], np.abs(self.wrap_upper).max(axis=1))
        if ku:
            scale[n - ku:] = np.maximum(scale[n - ku:], np.abs(self.wrap_lower).max(axis=1))
        return scale


def _checked_lu(A: np.ndarray):
    scale = np.abs(A).max(axis=1)
    zero_row = np.flatnonzero(scale == 0.0)
    if zero_row.size:
        raise SingularSystemError(int(zero_row[0]), 0.0, 0.0)
    with warnings.catch_warnings():
        # Exact zeros are reported below with their index.
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A, check_finite=False)
    # Row scale of the row swapped into pivot position k.
    perm = np.arange(A.shape[0])
    for k, p in enumerate(piv):
        perm[k], perm[p] = perm[p], perm[k]
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(pivots < PIVOT_RTOL * scale[perm])
    if bad.size:
        k = int(bad[0])
        raise SingularSystemError(k, float(pivots[k]), float(scale[perm][k]))
    return lu, piv


def solve_dense(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense partial-pivoting LU solve with an explicit pivot check."""
    return lu_solve(_checked_lu(np.asarray(A, dtype=float)), b, check_finite=False)


def _band_factor(sys: CyclicBandSystem):
    n, kl, ku = sys.n, sys.lower_bw, sys.upper_bw
    ab = np.zeros((2 * kl + ku + 1, n))
    ab[kl:] = sys.bands
    lu, ipiv, info = lapack.dgbtrf(ab, kl, ku)
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    # Diagonal of U sits in row kl + ku of the factored storage.
    pivots = np.abs(lu[kl + ku])
    scale = sys.row_scale()
    bad = np.flatnonzero(pivots < PIVOT_RTOL * np.maximum(scale, np.finfo(float).tiny))
    if info > 0 or bad.size:
        k = int(bad[0]) if bad.size else info - 1
        raise SingularSystemError(k, float(pivots[k]), float(scale[k]))
    return lu, ipiv


def solve(sys: CyclicBandSystem) -> np.ndarray:
    """Solve a cyclic banded system in ``O(n * bw**2)``.

    Raises
    ------
    SingularSystemError
        If both the banded path and the dense fallback find a vanishing pivot.
    """
    n, kl, ku = sys.n, sys.lower_bw, sys.upper_bw
    # Corners overlapping the band or each other: the system is tiny, go dense.
    if n < 2 * (kl + ku) + 2:
        return solve_dense(sys.to_dense(), sys.rhs)
    try:
        lu, ipiv = _band_factor(sys)
    except SingularSystemError as exc:
        log.warning("band factorisation failed (%s); falling back to dense LU", exc)
        return solve_dense(sys.to_dense(), sys.rhs)

    # A = B + U V^T with U selecting the first kl and last ku rows.
    k = kl + ku
    Vt = np.zeros((k, n))
    Vt[:kl, n - kl:] = sys.wrap_upper
    Vt[kl:, :ku] = sys.wrap_lower
    rhs = np.zeros((n, k + 1))
    rhs[:, 0] = sys.rhs
    idx = np.r_[np.arange(kl), np.arange(n - ku, n)]
    rhs[idx, 1 + np.arange(k)] = 1.0
    sol, info = lapack.dgbtrs(lu, kl, ku, rhs, ipiv)
    if info != 0:
        raise ValueError(f"dgbtrs: illegal argument {-info}")
    y, Z = sol[:, 0], sol[:, 1:]
    if k == 0 or not Vt.any():
        return y
    cap = np.eye(k) + Vt @ Z
    try:
        cap_lu = _checked_lu(cap)
    except SingularSystemError as exc:
        log.warning("Woodbury capacitance matrix singular (%s); falling back to dense LU", exc)
        return solve_dense(sys.to_dense(), sys.rhs)

    def apply_inverse(b):
        yb = lapack.dgbtrs(lu, kl, ku, b[:, None], ipiv)[0][:, 0]
        return yb - Z @ lu_solve(cap_lu, Vt @ yb, check_finite=False)

    x = y - Z @ lu_solve(cap_lu, Vt @ y, check_finite=False)
    if backward_error(sys, x) > BACKWARD_RTOL:
        x = x + apply_inverse(sys.rhs - sys.matvec(x))
        err = backward_error(sys, x)
        if err > BACKWARD_RTOL:
            log.warning("cyclic band solve backward error %.2e too large; falling back to dense LU", err)
            return solve_dense(sys.to_dense(), sys.rhs)
    return x


def residual_norm(sys: CyclicBandSystem, x: np.ndarray) -> float:
    """``||A x - b|| / ||b||``, or the absolute residual when ``b == 0``."""
    r = np.linalg.norm(sys.matvec(x) - sys.rhs)
    b = np.linalg.norm(sys.rhs)
    return float(r / b) if b > 0 else float(r)


def backward_error(sys: CyclicBandSystem, x: np.ndarray) -> float:
    """``||A x - b||_inf / (||A||_inf ||x||_inf + ||b||_inf)``."""
    r = np.max(np.abs(sys.matvec(x) - sys.rhs))
    denom = np.max(sys.abs_row_sums()) * np.max(np.abs(x)) + np.max(np.abs(sys.rhs))
    return float(r / denom) if denom > 0 else float(r)
