"""Dense linear algebra for the continuation engine.

LU solves with an explicit singularity test, bordered solves and eigenvalues
of small real matrices.  LAPACK (through scipy/numpy) does the arithmetic;
this module adds the pivot checks and the ordering conventions the rest of
the package relies on.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, NumericalError, SingularMatrixError

TOL_LIN = 1e-12
PIVOT_RTOL = 1e-14


@dataclass(frozen=True)
class LUFactor:
    lu: np.ndarray
    piv: np.ndarray

    def solve(self, b):
        return sla.lu_solve((self.lu, self.piv), b, check_finite=False)


def lu_factor(A, overwrite=False) -> LUFactor:
    """LU with partial pivoting; raises :class:`SingularMatrixError` when a
    pivot falls below ``1e-14`` times the largest column norm of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"lu_factor needs a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return LUFactor(A.copy(), np.zeros(0, dtype=np.int32))
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix contains non-finite entries")
    scale = np.sqrt(np.max(np.einsum("ij,ij->j", A, A)))
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, overwrite_a=overwrite, check_finite=False)
    pivots = np.abs(np.diag(lu))
    bad = np.flatnonzero(pivots < PIVOT_RTOL * scale) if scale > 0 else np.arange(A.shape[0])
    if bad.size:
        k = int(bad[0])
        raise SingularMatrixError(
            f"matrix is singular to working precision (pivot {k}: {pivots[k]:.3e})", pivot=k
        )
    return LUFactor(lu, piv)


def lu_solve(A, b) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ContractError(f"rhs length {b.shape[0]} does not match matrix size {A.shape[0]}")
    return lu_factor(A).solve(b)


@dataclass
class BorderedSystem:
    """``[[A, B], [C, D]] [x; y] = [f; g]`` with ``A`` N x N, ``B`` N x m,
    ``C`` m' x N, ``D`` m' x m."""

    core: np.ndarray
    border_cols: np.ndarray
    border_rows: np.ndarray
    corner: np.ndarray
    rhs: np.ndarray

    @property
    def shape(self):
        N = self.core.shape[0]
        return N + self.border_rows.shape[0], N + self.border_cols.shape[1]

    def assemble(self) -> np.ndarray:
        N = self.core.shape[0]
        out = np.empty(self.shape)
        out[:N, :N] = self.core
        out[:N, N:] = self.border_cols
        out[N:, :N] = self.border_rows
        out[N:, N:] = self.corner
        return out


def factor_bordered(sys: BorderedSystem) -> LUFactor:
    rows, cols = sys.shape
    if rows != cols:
        raise ContractError(
            f"bordered system is {rows} x {cols}: border rows and columns must match"
        )
    return lu_factor(sys.assemble(), overwrite=True)


def solve_bordered(sys: BorderedSystem, factor: LUFactor | None = None) -> np.ndarray:
    """Solve the assembled bordered system.

    The core block of a periodic BVP is singular on its own (phase shift),
    so block elimination is not safe here; the full matrix is factored.
    """
    if factor is None:
        factor = factor_bordered(sys)
    return factor.solve(sys.rhs)


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted by descending real part, then descending imaginary part."""

    values: np.ndarray

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values)

    @property
    def real(self):
        return self.values.real

    @property
    def imag(self):
        return self.values.imag

    def complex_pairs(self, tol=1e-10):
        """Eigenvalues with positive imaginary part (one per conjugate pair)."""
        return self.values[self.values.imag > tol * max(1.0, np.max(np.abs(self.values)))]


def sort_spectrum(values) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    # lexsort: last key is primary
    order = np.lexsort((-values.imag, -values.real))
    return values[order]


def eigenvalues(A) -> Spectrum:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError(f"eigenvalues need a square matrix, got shape {A.shape}")
    try:
        vals = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc
    # clean up conjugate pairs so that they match exactly
    vals = np.where(np.abs(vals.imag) <= 1e-14 * max(1.0, np.max(np.abs(vals), initial=0)), vals.real + 0j, vals)
    return Spectrum(sort_spectrum(vals))
