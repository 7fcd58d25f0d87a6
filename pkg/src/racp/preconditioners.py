"""Block preconditioners for [[A, B], [B^T, 0]].

``RacpPreconditioner`` applies the reverse augmented constraint operators

    M^-1   = [[I, 0], [C^-1 B^T, I]] diag(S~^-1, -C^-1) [[I,  B C^-1], [0, I]]
    M_a^-1 = [[I, 0], [C^-1 B^T, I]] diag(S~^-1,  C^-1) [[I, -B C^-1], [0, I]]

where S~^-1 approximates the inverse of S_u = A + B C^-1 B^T.
``McpPreconditioner`` is the classical block-LDU constraint preconditioner
built on approximations of A^-1 and of the dual Schur complement.

Flop convention: a multiply-add is 2 flops, an SpMV that accumulates into an
existing vector costs 2*nnz, a triangular solve costs 2*nnz(factor), a
diagonal scaling costs one flop per entry; vector updates not fused into a
matvec cost one flop per entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .augmentation import build_augmentation, form_primal_schur
from .problem_gen import SaddleSystem
from .sparse import DimensionError, SparseMatrix, spmm, spmv, transpose

INNER_KINDS = ("exact_factor", "jacobi", "ic0")
_KIND_ALIASES = {"exact": "exact_factor", "exact_factor": "exact_factor",
                 "jacobi": "jacobi", "ic0": "ic0"}

IC0_SHIFT = 1e-3
SINGULAR_PIVOT_TOL = 1e-10


class FactorizationError(RuntimeError):
    """A factorization broke down (non-positive or vanishing pivot)."""


@dataclass(eq=False)
class InnerSolver:
    """Approximate inverse of an SPD matrix; ``apply`` accepts column blocks."""

    kind: str
    n: int
    flops_per_apply: int
    _apply: object = field(repr=False)
    _spd_form: object = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    def apply(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.n:
            raise DimensionError(f"inner solver of size {self.n} got {y.shape[0]}")
        return self._apply(y)

    def __call__(self, y):
        return self.apply(y)

    @property
    def spd_form(self) -> SparseMatrix:
        """Matrix whose exact inverse ``apply`` computes."""
        if self._spd_form is None:
            raise NotImplementedError(f"inner solver {self.kind!r} exposes no SPD form")
        if callable(self._spd_form):
            self._spd_form = self._spd_form()
        return self._spd_form


def _exact_factor(s: SparseMatrix, singular_tol: float) -> InnerSolver:
    csc = s.to_scipy().tocsc()
    try:
        lu = spla.splu(csc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise FactorizationError(f"exact factorization failed: {exc}") from exc
    piv = np.abs(lu.U.diagonal())
    if piv.size and (not np.all(np.isfinite(piv)) or piv.min() <= singular_tol * piv.max()):
        raise FactorizationError(
            f"matrix is numerically singular (pivot ratio {piv.min() / piv.max():.2e})")
    fill = lu.L.nnz + lu.U.nnz
    return InnerSolver("exact_factor", s.n_rows, 2 * fill, lu.solve, s,
                       {"factor_nnz": int(fill)})


def _jacobi(s: SparseMatrix) -> InnerSolver:
    d = s.diagonal()
    if np.any(d <= 0):
        raise FactorizationError("Jacobi needs a positive diagonal")

    def apply(y):
        return y / (d if y.ndim == 1 else d[:, None])

    return InnerSolver("jacobi", s.n_rows, s.n_rows, apply, SparseMatrix.diag(d))


def ic0_factor(s: SparseMatrix) -> SparseMatrix:
    """Zero-fill incomplete Cholesky: lower L on the pattern of tril(s).

    Raises FactorizationError on a non-positive pivot.
    """
    n = s.n_rows
    rows = []
    diag = np.zeros(n)
    for i in range(n):
        lo, hi = s.row_offsets[i], s.row_offsets[i + 1]
        cols, vals = s.col_indices[lo:hi], s.values[lo:hi]
        lower = cols < i
        li = dict(zip(cols[lower].tolist(), vals[lower].tolist()))
        aii = vals[cols == i]
        aii = float(aii[0]) if aii.size else 0.0
        for k in sorted(li):
            rk = rows[k]
            acc = li[k]
            for j, lkj in rk.items():
                lij = li.get(j)
                if lij is not None:
                    acc -= lij * lkj
            li[k] = acc / diag[k]
        piv = aii - sum(v * v for v in li.values())
        if not piv > 0:
            raise FactorizationError(f"IC(0) breakdown at row {i} (pivot {piv:.3e})")
        diag[i] = np.sqrt(piv)
        rows.append(li)
    r, c, v = [], [], []
    for i, li in enumerate(rows):
        for j, val in li.items():
            r.append(i)
            c.append(j)
            v.append(val)
        r.append(i)
        c.append(i)
        v.append(diag[i])
    return SparseMatrix.from_coo(r, c, v, n, n)


def _ic0(s: SparseMatrix) -> InnerSolver:
    shift = 0.0
    try:
        low = ic0_factor(s)
    except FactorizationError:
        # one retry with a relative diagonal shift
        shift = IC0_SHIFT
        shifted = SparseMatrix(s.n_rows, s.n_cols, s.row_offsets, s.col_indices,
                               s.values + shift * np.where(s.row_ids() == s.col_indices, s.values, 0.0))
        low = ic0_factor(shifted)
    lower = low.to_scipy()
    upper = lower.T.tocsr()

    def apply(y):
        z = spla.spsolve_triangular(lower, y, lower=True)
        return spla.spsolve_triangular(upper, z, lower=False)

    return InnerSolver("ic0", s.n_rows, 4 * low.nnz, apply,
                       lambda: spmm(low, transpose(low)),
                       {"diagonal_shift": shift, "factor_nnz": int(low.nnz)})


def build_inner_solver(kind: str, s: SparseMatrix, singular_tol: float = SINGULAR_PIVOT_TOL) -> InnerSolver:
    """Inner approximation of s^-1 for an SPD sparse matrix s.

    ``exact_factor``: sparse LU in symmetric mode (no pivoting), exact solve.
    ``jacobi``: inverse diagonal.
    ``ic0``: zero-fill incomplete Cholesky; on breakdown retried once with
    the diagonal scaled by (1 + 1e-3).
    """
    kind = _KIND_ALIASES.get(kind, kind)
    if kind == "exact_factor":
        return _exact_factor(s, singular_tol)
    if kind == "jacobi":
        return _jacobi(s)
    if kind == "ic0":
        return _ic0(s)
    raise ValueError(f"unknown inner solver kind {kind!r}; expected one of {INNER_KINDS}")


@dataclass(eq=False)
class IdentityPreconditioner:
    n: int
    flops_per_apply: int = 0
    name: str = "none"

    def apply(self, v):
        return np.array(v, dtype=float, copy=True)

    def __call__(self, v):
        return self.apply(v)


@dataclass(eq=False)
class RacpPreconditioner:
    variant: str
    c: object
    b: SparseMatrix
    inner: InnerSolver
    b_t: SparseMatrix = None
    s_u: SparseMatrix | None = None

    def __post_init__(self):
        if self.variant not in ("M", "Ma"):
            raise ValueError("variant must be 'M' or 'Ma'")
        if self.c.n != self.b.n_cols or self.inner.n != self.b.n_rows:
            raise DimensionError("C, B and the inner solver do not conform")
        if self.b_t is None:
            self.b_t = transpose(self.b)
        if self.c.is_diagonal:
            self._bc = self.b.scale_columns(1.0 / self.c.entries)
        else:
            self._bc = None

    @property
    def n_u(self) -> int:
        return self.b.n_rows

    @property
    def n_t(self) -> int:
        return self.b.n_cols

    @property
    def name(self) -> str:
        return "racp-m" if self.variant == "M" else "racp-ma"

    @property
    def flops_per_apply(self) -> int:
        c_flops = self.c.solve_flops() * (1 if self.c.is_diagonal else 2)
        return 4 * self.b.nnz + c_flops + self.inner.flops_per_apply

    def _b_cinv(self, vt):
        if self._bc is not None:
            return spmv(self._bc, vt)
        return spmv(self.b, self.c.solve(vt))

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n_u + self.n_t:
            raise DimensionError(f"expected length {self.n_u + self.n_t}, got {v.shape[0]}")
        vu, vt = v[: self.n_u], v[self.n_u:]
        if self.variant == "M":
            wu = self.inner.apply(vu + self._b_cinv(vt))
            wt = self.c.solve(spmv(self.b_t, wu) - vt)
        else:
            wu = self.inner.apply(vu - self._b_cinv(vt))
            wt = self.c.solve(spmv(self.b_t, wu) + vt)
        return np.concatenate((wu, wt))

    def __call__(self, v):
        return self.apply(v)

    @classmethod
    def build(cls, system: SaddleSystem, variant: str = "M", recipe: str = "norm_ratio",
              omega: float = 1.0, inner: str = "exact_factor", c=None) -> "RacpPreconditioner":
        if c is None:
            c = build_augmentation(recipe, system.a, system.b, omega)
        s_u = form_primal_schur(system.a, system.b, c)
        return cls(variant, c, system.b, build_inner_solver(inner, s_u), system.bt, s_u)


def apply_racp_m(p: RacpPreconditioner, v):
    if p.variant != "M":
        raise ValueError("preconditioner is not the M variant")
    return p.apply(v)


def apply_racp_ma(p: RacpPreconditioner, v):
    if p.variant != "Ma":
        raise ValueError("preconditioner is not the Ma variant")
    return p.apply(v)


@dataclass(eq=False)
class McpPreconditioner:
    """Block LDU preconditioner with A~^-1 and S~ = -B^T diag(A)^-1 B."""

    inner_a: InnerSolver
    schur_inner: InnerSolver  # approximates (-S~)^-1, -S~ being SPD
    b: SparseMatrix
    b_t: SparseMatrix
    schur: SparseMatrix  # S~ itself (negative definite)
    name: str = "mcp"

    @property
    def n_u(self) -> int:
        return self.b.n_rows

    @property
    def n_t(self) -> int:
        return self.b.n_cols

    @property
    def flops_per_apply(self) -> int:
        return 2 * self.inner_a.flops_per_apply + 4 * self.b.nnz + self.schur_inner.flops_per_apply + self.n_u

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n_u + self.n_t:
            raise DimensionError(f"expected length {self.n_u + self.n_t}, got {v.shape[0]}")
        vu, vt = v[: self.n_u], v[self.n_u:]
        zu = self.inner_a.apply(vu)
        wt = -self.schur_inner.apply(vt - spmv(self.b_t, zu))
        wu = zu - self.inner_a.apply(spmv(self.b, wt))
        return np.concatenate((wu, wt))

    def __call__(self, v):
        return self.apply(v)

    @classmethod
    def build(cls, system: SaddleSystem, inner_a: str = "exact_factor",
              schur_inner: str = "exact_factor") -> "McpPreconditioner":
        """Raises FactorizationError when A is detected singular."""
        ia = build_inner_solver(inner_a, system.a)
        d = system.a.diagonal()
        if np.any(d <= 0):
            raise FactorizationError("leading block has a non-positive diagonal")
        neg_schur = spmm(transpose(system.b).scale_columns(1.0 / d), system.b)
        si = build_inner_solver(schur_inner, neg_schur)
        schur = SparseMatrix(neg_schur.n_rows, neg_schur.n_cols, neg_schur.row_offsets,
                             neg_schur.col_indices, -neg_schur.values)
        return cls(ia, si, system.b, system.bt, schur)


def apply_mcp(p: McpPreconditioner, v):
    return p.apply(v)


def cost_model(p, system: SaddleSystem) -> dict:
    """Application cost relative to one saddle matvec: flops / (2 (nnz(A) + 2 nnz(B)))."""
    flops = int(p.flops_per_apply)
    return {"flops": flops, "c_app": flops / system.matvec_flops}


def build_preconditioner(system: SaddleSystem, name: str, recipe: str = "norm_ratio",
                         omega: float = 1.0, inner: str = "exact_factor"):
    """Factory used by the CLI: ``racp-m``, ``racp-ma``, ``mcp`` or ``none``."""
    if name == "racp-m":
        return RacpPreconditioner.build(system, "M", recipe, omega, inner)
    if name == "racp-ma":
        return RacpPreconditioner.build(system, "Ma", recipe, omega, inner)
    if name == "mcp":
        return McpPreconditioner.build(system, inner_a=inner)
    if name == "none":
        return IdentityPreconditioner(system.n)
    raise ValueError(f"unknown preconditioner {name!r}")


__all__ = [
    "FactorizationError", "IdentityPreconditioner", "InnerSolver",
    "McpPreconditioner", "RacpPreconditioner", "apply_mcp", "apply_racp_m", "apply_racp_ma",
    "build_inner_solver", "build_preconditioner", "cost_model", "ic0_factor",
]
