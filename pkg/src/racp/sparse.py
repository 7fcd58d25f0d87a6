"""Compressed sparse row storage and the handful of kernels the solver needs.

Everything here works on plain numpy arrays.  ``SparseMatrix`` is immutable
once built; kernels return new objects.  Exact zeros produced by numerical
cancellation are *kept* in the structure, so sparsity patterns are a
deterministic function of the input patterns.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

DEFAULT_DENSE_CAP = 2000


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class DenseCapExceeded(ValueError):
    """A dense computation was requested above the configured size cap."""


class MatrixMarketError(ValueError):
    """Malformed or unsupported Matrix Market file."""


def dense_cap() -> int:
    """Size cap for dense spectral work, overridable with ``RACP_DENSE_CAP``."""
    return int(os.environ.get("RACP_DENSE_CAP", DEFAULT_DENSE_CAP))


@dataclass(frozen=True, eq=False)
class FlopCounter:
    """Mutable tally of floating point operations, shared by kernels."""

    count: dict = field(default_factory=lambda: {"flops": 0})

    def add(self, n: int) -> None:
        self.count["flops"] += int(n)

    @property
    def flops(self) -> int:
        return self.count["flops"]

    def reset(self) -> None:
        self.count["flops"] = 0


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """CSR matrix.

    Within each row, column indices are strictly increasing; no duplicates.
    Use :meth:`from_coo` to build from unsorted triplets.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if ro.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if ro[0] != 0 or ro[-1] != len(va) or len(ci) != len(va):
            raise ValueError("row_offsets inconsistent with stored entries")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            starts = np.zeros(len(ci) + 1, dtype=bool)
            starts[ro] = True
            if np.any((np.diff(ci) <= 0) & ~starts[1:-1]):
                raise ValueError("column indices must be strictly increasing within rows")
        if not np.all(np.isfinite(va)):
            raise ValueError("matrix entries must be finite")
        for arr in (ro, ci, va):
            arr.flags.writeable = False
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)

    # -- construction -------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, n_rows: int, n_cols: int) -> "SparseMatrix":
        """Build from triplets; duplicates are summed, zeros are kept."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if len(rows) and (rows.min() < 0 or rows.max() >= n_rows):
            raise ValueError("row index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new = np.ones(len(rows), dtype=bool)
            new[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(new) - 1
            vals = np.bincount(group, weights=vals, minlength=group[-1] + 1)
            rows, cols = rows[new], cols[new]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        return cls(n_rows, n_cols, np.cumsum(offsets), cols, vals)

    @classmethod
    def from_dense(cls, dense, keep_zeros: bool = False) -> "SparseMatrix":
        dense = np.atleast_2d(np.asarray(dense, dtype=np.float64))
        if keep_zeros:
            r, c = np.indices(dense.shape)
            r, c = r.ravel(), c.ravel()
        else:
            r, c = np.nonzero(dense)
        return cls.from_coo(r, c, dense[r, c], *dense.shape)

    @classmethod
    def from_scipy(cls, m) -> "SparseMatrix":
        m = sp.coo_matrix(m)
        return cls.from_coo(m.row, m.col, m.data, *m.shape)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def diag(cls, d) -> "SparseMatrix":
        d = np.asarray(d, dtype=np.float64)
        n = len(d)
        return cls(n, n, np.arange(n + 1), np.arange(n), d)

    @classmethod
    def zeros(cls, n_rows: int, n_cols: int) -> "SparseMatrix":
        return cls(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    # -- views ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets),
                             shape=self.shape)

    def pattern(self) -> set[tuple[int, int]]:
        return set(zip(self.row_ids().tolist(), self.col_indices.tolist()))

    def diagonal(self) -> np.ndarray:
        out = np.zeros(min(self.shape))
        r = self.row_ids()
        on = (r == self.col_indices) & (r < len(out))
        out[r[on]] = self.values[on]
        return out

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Row positions and values of the stored entries of column ``j``."""
        hit = self.col_indices == j
        return self.row_ids()[hit], self.values[hit]

    def scale_columns(self, s) -> "SparseMatrix":
        s = np.asarray(s, dtype=np.float64)
        return SparseMatrix(self.n_rows, self.n_cols, self.row_offsets,
                            self.col_indices, self.values * s[self.col_indices])

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def __matmul__(self, x):
        return spmv(self, x)

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


@dataclass(frozen=True)
class DenseMatrix:
    n_rows: int
    n_cols: int
    values: np.ndarray  # row-major, length n_rows * n_cols

    def __post_init__(self):
        if len(self.values) != self.n_rows * self.n_cols:
            raise ValueError("dense storage length mismatch")

    @classmethod
    def from_array(cls, arr) -> "DenseMatrix":
        arr = np.asarray(arr, dtype=np.float64)
        return cls(arr.shape[0], arr.shape[1], arr.ravel().copy())

    def to_array(self) -> np.ndarray:
        return self.values.reshape(self.n_rows, self.n_cols)


def as_vector(x) -> np.ndarray:
    """Validate a vector: 1-D, float, finite."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("expected a 1-D vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector has non-finite entries")
    return x


# -- kernels ---------------------------------------------------------------


def spmv(m: SparseMatrix, x, counter: FlopCounter | None = None) -> np.ndarray:
    """y = m @ x.  Also accepts a 2-D block of column vectors.

    Costs exactly ``2 * nnz`` flops per right-hand side.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != m.n_cols:
        raise DimensionError(f"spmv: matrix has {m.n_cols} columns, vector has {x.shape[0]}")
    if counter is not None:
        counter.add(2 * m.nnz * (1 if x.ndim == 1 else x.shape[1]))
    rows = m.row_ids()
    if x.ndim == 1:
        return np.bincount(rows, weights=m.values * x[m.col_indices], minlength=m.n_rows)
    prod = m.values[:, None] * x[m.col_indices]
    out = np.zeros((m.n_rows, x.shape[1]))
    np.add.at(out, rows, prod)
    return out


def spmv_flops(m: SparseMatrix) -> int:
    return 2 * m.nnz


def transpose(m: SparseMatrix) -> SparseMatrix:
    rows = m.row_ids()
    # stable sort by column keeps row order increasing inside each new row
    order = np.argsort(m.col_indices, kind="stable")
    counts = np.bincount(m.col_indices, minlength=m.n_cols)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    return SparseMatrix(m.n_cols, m.n_rows, offsets, rows[order], m.values[order])


def spmm(a: SparseMatrix, b: SparseMatrix) -> SparseMatrix:
    """Sparse product with separate symbolic and numeric phases.

    The symbolic pass fixes the output pattern as the structural product of
    the two patterns; the numeric pass fills it.  Entries that cancel to an
    exact zero stay in the pattern.
    """
    if a.n_cols != b.n_rows:
        raise DimensionError(f"spmm: {a.shape} @ {b.shape}")
    ao, ac, av = a.row_offsets, a.col_indices, a.values
    bo, bc, bv = b.row_offsets, b.col_indices, b.values

    # symbolic
    marker = np.full(b.n_cols, -1, dtype=np.int64)
    offsets = np.zeros(a.n_rows + 1, dtype=np.int64)
    row_cols = []
    for i in range(a.n_rows):
        cols = []
        for k in ac[ao[i]:ao[i + 1]]:
            for j in bc[bo[k]:bo[k + 1]]:
                if marker[j] != i:
                    marker[j] = i
                    cols.append(j)
        cols.sort()
        row_cols.append(cols)
        offsets[i + 1] = offsets[i] + len(cols)
    col_indices = np.fromiter((j for cols in row_cols for j in cols),
                              dtype=np.int64, count=offsets[-1])

    # numeric
    values = np.zeros(offsets[-1])
    slot = np.full(b.n_cols, -1, dtype=np.int64)
    for i in range(a.n_rows):
        start, stop = offsets[i], offsets[i + 1]
        slot[col_indices[start:stop]] = np.arange(start, stop)
        for p in range(ao[i], ao[i + 1]):
            k, aik = ac[p], av[p]
            lo, hi = bo[k], bo[k + 1]
            values[slot[bc[lo:hi]]] += aik * bv[lo:hi]
    return SparseMatrix(a.n_rows, b.n_cols, offsets, col_indices, values)


def add(a: SparseMatrix, b: SparseMatrix, alpha: float = 1.0, beta: float = 1.0) -> SparseMatrix:
    """alpha*a + beta*b on the union pattern (cancellations kept)."""
    if a.shape != b.shape:
        raise DimensionError(f"add: {a.shape} vs {b.shape}")
    rows = np.concatenate((a.row_ids(), b.row_ids()))
    cols = np.concatenate((a.col_indices, b.col_indices))
    vals = np.concatenate((alpha * a.values, beta * b.values))
    return SparseMatrix.from_coo(rows, cols, vals, *a.shape)


def gather_submatrix(a: SparseMatrix, idx) -> DenseMatrix:
    """Dense principal block ``a[idx][:, idx]``."""
    idx = np.asarray(idx, dtype=np.int64)
    k = len(idx)
    if k == 0:
        return DenseMatrix(0, 0, np.zeros(0))
    if np.any(np.diff(idx) <= 0):
        raise ValueError("gather indices must be strictly increasing")
    if idx[0] < 0 or idx[-1] >= min(a.n_rows, a.n_cols):
        raise IndexError("gather index out of range")
    out = np.zeros((k, k))
    pos = np.full(a.n_cols, -1, dtype=np.int64)
    pos[idx] = np.arange(k)
    for p, i in enumerate(idx):
        lo, hi = a.row_offsets[i], a.row_offsets[i + 1]
        cols = a.col_indices[lo:hi]
        q = pos[cols]
        keep = q >= 0
        out[p, q[keep]] = a.values[lo:hi][keep]
    return DenseMatrix.from_array(out)


def is_symmetric(m: SparseMatrix) -> bool:
    """Exact symmetry of stored values (pattern and entries)."""
    if m.n_rows != m.n_cols:
        return False
    t = transpose(m)
    return (np.array_equal(t.row_offsets, m.row_offsets)
            and np.array_equal(t.col_indices, m.col_indices)
            and np.array_equal(t.values, m.values))


# -- dense helpers ---------------------------------------------------------


def _as_array(m) -> np.ndarray:
    if isinstance(m, DenseMatrix):
        return m.to_array()
    if isinstance(m, SparseMatrix):
        return m.to_dense()
    return np.atleast_2d(np.asarray(m, dtype=np.float64))


def spectral_norm_2(m) -> float:
    arr = _as_array(m)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.svd(arr, compute_uv=False)[0])


def dense_eigensolve(m, symmetric: bool = False, cap: int | None = None) -> np.ndarray:
    """All eigenvalues of a square dense matrix (complex for the general case)."""
    arr = _as_array(m)
    cap = dense_cap() if cap is None else cap
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError("eigensolve needs a square matrix")
    if arr.shape[0] > cap:
        raise DenseCapExceeded(f"n={arr.shape[0]} exceeds dense cap {cap}")
    try:
        if symmetric:
            return np.linalg.eigvalsh(arr).astype(complex)
        return np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc


# -- Matrix Market ---------------------------------------------------------


def read_matrix_market(path) -> SparseMatrix:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split()
    if (len(header) != 5 or header[0] != "%%MatrixMarket" or header[1].lower() != "matrix"
            or header[2].lower() != "coordinate"):
        raise MatrixMarketError(f"{path}: expected a coordinate Matrix Market header")
    if header[3].lower() not in ("real", "integer") or header[4].lower() not in ("general", "symmetric"):
        raise MatrixMarketError(f"{path}: unsupported field/symmetry {header[3]} {header[4]}")
    try:
        m = scipy.io.mmread(path)
    except (ValueError, IndexError) as exc:
        raise MatrixMarketError(f"{path}: {exc}") from exc
    return SparseMatrix.from_scipy(m)


def write_matrix_market(m: SparseMatrix, path, comment: str = "") -> None:
    """Write in ``coordinate real general`` with full precision."""
    rows = m.row_ids() + 1
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        for line in comment.splitlines():
            fh.write(f"% {line}\n")
        fh.write(f"{m.n_rows} {m.n_cols} {m.nnz}\n")
        for i, j, v in zip(rows, m.col_indices + 1, m.values):
            fh.write(f"{i} {j} {float(v)!r}\n")
