"""Augmentation matrix C and the primal Schur complement S_u = A + B C^-1 B^T."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .sparse import (DimensionError, SparseMatrix, add, gather_submatrix, spectral_norm_2, spmm,
                     transpose)


class LocalBlockError(ValueError):
    """A gathered block A|_{b_i} cannot be factorized."""

    def __init__(self, column: int, message: str):
        super().__init__(f"column {column}: {message}")
        self.column = column


@dataclass(frozen=True, eq=False)
class AugmentationDiag:
    """Diagonal SPD augmentation with its construction recipe."""

    entries: np.ndarray
    recipe: str
    omega: float | None = None
    gamma: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 1 or not np.all(np.isfinite(e)) or np.any(e <= 0):
            raise ValueError("augmentation entries must be finite and strictly positive")
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def is_diagonal(self) -> bool:
        return True

    def solve(self, v):
        """C^-1 v (column blocks allowed)."""
        v = np.asarray(v, dtype=float)
        return v / (self.entries if v.ndim == 1 else self.entries[:, None])

    def solve_flops(self) -> int:
        return self.n

    def matrix(self) -> np.ndarray:
        return np.diag(self.entries)

    def inv_sqrt(self) -> np.ndarray:
        return np.diag(1.0 / np.sqrt(self.entries))

    def to_sparse(self) -> SparseMatrix:
        return SparseMatrix.diag(self.entries)

    def scaled(self, s: float) -> "AugmentationDiag":
        return AugmentationDiag(self.entries * s, self.recipe, self.omega, self.gamma, dict(self.meta))


@dataclass(frozen=True, eq=False)
class AugmentationDense:
    """Full SPD C, used for the ideal choice C = B^T A^-1 B in spectral checks."""

    c: np.ndarray
    recipe: str = "ideal"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", 0.5 * (c + c.T))
        object.__setattr__(self, "_chol", sla.cho_factor(self.c))

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return False

    def solve(self, v):
        return sla.cho_solve(self._chol, np.asarray(v, dtype=float))

    def solve_flops(self) -> int:
        return 2 * self.n * self.n

    def matrix(self) -> np.ndarray:
        return self.c

    def inv_sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.c)
        return (v / np.sqrt(w)) @ v.T


def _column_supports(b: SparseMatrix):
    bt = transpose(b)
    for i in range(b.n_cols):
        lo, hi = bt.row_offsets[i], bt.row_offsets[i + 1]
        idx, vals = bt.col_indices[lo:hi], bt.values[lo:hi]
        nz = vals != 0
        yield i, idx[nz], vals[nz]


def compute_c_local_solve(a: SparseMatrix, b: SparseMatrix, pivot_tol: float = 1e-12) -> AugmentationDiag:
    """C_ii = r(b_i)^T (A|_{b_i})^-1 r(b_i), one small dense Cholesky per column.

    The gathered block is rejected when a Cholesky pivot falls below
    ``pivot_tol * ||A|_{b_i}||_2`` or the factorization breaks down.
    """
    _check_shapes(a, b)
    entries = np.empty(b.n_cols)
    for i, idx, r in _column_supports(b):
        if len(idx) == 0:
            raise LocalBlockError(i, "empty column of B")
        block = gather_submatrix(a, idx).to_array()
        scale = spectral_norm_2(block)
        if scale == 0:
            raise LocalBlockError(i, "local block is zero")
        try:
            low = np.linalg.cholesky(block)
        except np.linalg.LinAlgError:
            raise LocalBlockError(i, "local block is not positive definite") from None
        if np.min(np.diag(low)) ** 2 < pivot_tol * scale:
            raise LocalBlockError(i, "local block is numerically singular")
        y = sla.solve_triangular(low, r, lower=True)
        entries[i] = y @ y
    return AugmentationDiag(entries, "local_solve", meta={"pivot_tol": pivot_tol})


def compute_c_norm_ratio(a: SparseMatrix, b: SparseMatrix, omega: float = 1.0) -> AugmentationDiag:
    """C_ii = omega * ||r(b_i)||^2 / ||A|_{b_i}||_2, spectral norm of the gathered block."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    _check_shapes(a, b)
    entries = np.empty(b.n_cols)
    for i, idx, r in _column_supports(b):
        if len(idx) == 0:
            raise LocalBlockError(i, "empty column of B")
        block_norm = spectral_norm_2(gather_submatrix(a, idx))
        if block_norm == 0:
            raise LocalBlockError(i, "local block has zero norm")
        entries[i] = omega * (r @ r) / block_norm
    return AugmentationDiag(entries, "norm_ratio", omega=float(omega))


def compute_c_global(a: SparseMatrix, b: SparseMatrix) -> AugmentationDiag:
    """C = gamma I with gamma = ||B||_F^2 / ||A||_F."""
    _check_shapes(a, b)
    na, nb = a.frobenius_norm(), b.frobenius_norm()
    if na == 0 or nb == 0:
        raise ValueError("global augmentation needs nonzero A and B")
    gamma = nb * nb / na
    return AugmentationDiag(np.full(b.n_cols, gamma), "global_gamma", gamma=gamma,
                            meta={"norm": "frobenius"})


def ideal_augmentation(a: SparseMatrix, b: SparseMatrix) -> AugmentationDense:
    """C = B^T A^-1 B, dense; requires nonsingular A."""
    _check_shapes(a, b)
    bd = b.to_dense()
    return AugmentationDense(bd.T @ np.linalg.solve(a.to_dense(), bd))


def build_augmentation(recipe: str, a: SparseMatrix, b: SparseMatrix, omega: float = 1.0):
    recipes = {
        "local": lambda: compute_c_local_solve(a, b),
        "local_solve": lambda: compute_c_local_solve(a, b),
        "norm": lambda: compute_c_norm_ratio(a, b, omega),
        "norm_ratio": lambda: compute_c_norm_ratio(a, b, omega),
        "global": lambda: compute_c_global(a, b),
        "global_gamma": lambda: compute_c_global(a, b),
        "ideal": lambda: ideal_augmentation(a, b),
    }
    try:
        return recipes[recipe]()
    except KeyError:
        raise ValueError(f"unknown C recipe {recipe!r}") from None


def form_primal_schur(a: SparseMatrix, b: SparseMatrix, c) -> SparseMatrix:
    """S_u = A + (B C^-1) B^T via the sparse product; the result pattern is
    pattern(A) union pattern(B B^T).  A dense C yields a dense-pattern term."""
    _check_shapes(a, b)
    if c.n != b.n_cols:
        raise DimensionError("C size does not match the columns of B")
    if c.is_diagonal:
        bc = b.scale_columns(1.0 / c.entries)
        term = spmm(bc, transpose(b))
    else:
        bd = b.to_dense()
        term = SparseMatrix.from_dense(bd @ c.solve(bd.T), keep_zeros=True)
    s_u = add(a, term)
    # B C^-1 B^T is symmetric in exact arithmetic; average away rounding asymmetry
    return add(s_u, transpose(s_u), 0.5, 0.5)


def _check_shapes(a: SparseMatrix, b: SparseMatrix) -> None:
    if a.n_rows != a.n_cols or b.n_rows != a.n_rows:
        raise DimensionError(f"A {a.shape} and B {b.shape} do not conform")
