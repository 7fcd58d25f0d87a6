"""Synthetic contact saddle-point systems.

Two families of generators:

* structured hexahedral elasticity blocks cut by one planar fracture, with
  the node layer on the fracture duplicated and tied back together by
  node-to-node Lagrange multipliers (one normal, two tangential per pair);
* random sparse SPD/full-rank pairs used as fodder for spectral checks.

Generators emit discrete systems directly; there is no weak-form layer.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .sparse import (DenseCapExceeded, SparseMatrix, add, dense_cap, is_symmetric,
                     spectral_norm_2, spmv, transpose)

AXES = {"x": 0, "y": 1, "z": 2}
FACES = ("x0", "x1", "y0", "y1", "z0", "z1")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """The pair (A, B) of the saddle-point matrix [[A, B], [B^T, 0]]."""

    a: SparseMatrix
    b: SparseMatrix
    rhs: np.ndarray | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.a.n_rows != self.a.n_cols:
            raise ValueError("A must be square")
        if self.b.n_rows != self.a.n_rows:
            raise ValueError("B must have n_u rows")
        if self.n_t >= self.n_u:
            raise ValueError("need n_u > n_t")
        if self.rhs is not None and len(self.rhs) != self.n:
            raise ValueError("rhs length must be n_u + n_t")

    @property
    def n_u(self) -> int:
        return self.a.n_rows

    @property
    def n_t(self) -> int:
        return self.b.n_cols

    @property
    def n(self) -> int:
        return self.n_u + self.n_t

    def right_hand_side(self) -> np.ndarray:
        return np.ones(self.n) if self.rhs is None else np.asarray(self.rhs, dtype=float)

    def matvec(self, v, counter=None) -> np.ndarray:
        """[[A, B], [B^T, 0]] @ v (v may be a block of columns)."""
        v = np.asarray(v, dtype=float)
        vu, vt = v[: self.n_u], v[self.n_u:]
        yu = spmv(self.a, vu, counter) + spmv(self.b, vt, counter)
        yt = spmv(self.bt, vu, counter)
        return np.concatenate((yu, yt))

    @property
    def bt(self) -> SparseMatrix:
        cached = self.__dict__.get("_bt")
        if cached is None:
            cached = transpose(self.b)
            object.__setattr__(self, "_bt", cached)
        return cached

    @property
    def matvec_flops(self) -> int:
        return 2 * (self.a.nnz + 2 * self.b.nnz)

    def to_dense(self) -> np.ndarray:
        a, b = self.a.to_dense(), self.b.to_dense()
        return np.block([[a, b], [b.T, np.zeros((self.n_t, self.n_t))]])


@dataclass(frozen=True)
class GridParams:
    nx: int = 2
    ny: int = 2
    nz: int = 2
    young_modulus: float = 1.0
    poisson_ratio: float = 0.25
    fracture_axis: str | None = "x"
    fracture_index: int | None = 1
    dirichlet_faces: tuple[str, ...] = ("x0", "x1")
    distortion: float = 0.0
    size: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        for n in (self.nx, self.ny, self.nz):
            if int(n) < 1:
                raise GeneratorError("element counts must be >= 1")
        if not 0.0 < self.poisson_ratio < 0.5:
            raise GeneratorError(f"Poisson ratio must lie in (0, 0.5), got {self.poisson_ratio}")
        if self.young_modulus <= 0:
            raise GeneratorError("Young's modulus must be positive")
        if not 0.0 <= self.distortion < 1.0:
            raise GeneratorError("distortion must lie in [0, 1)")
        bad = set(self.dirichlet_faces) - set(FACES)
        if bad:
            raise GeneratorError(f"unknown Dirichlet faces {sorted(bad)}")
        if self.fracture_axis is not None:
            if self.fracture_axis not in AXES:
                raise GeneratorError(f"unknown fracture axis {self.fracture_axis!r}")
            n_along = self.counts[AXES[self.fracture_axis]]
            if self.fracture_index is None or not 0 < self.fracture_index < n_along:
                raise GeneratorError(
                    f"fracture index must be interior (0 < k < {n_along}), got {self.fracture_index}")

    @property
    def counts(self) -> tuple[int, int, int]:
        return (int(self.nx), int(self.ny), int(self.nz))

    def to_json(self) -> dict:
        d = asdict(self)
        d["dirichlet_faces"] = list(self.dirichlet_faces)
        d["size"] = list(self.size)
        return d


# -- element kernel ----------------------------------------------------------

_GP = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_CORNERS = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)


def elasticity_matrix(young: float, nu: float) -> np.ndarray:
    lam = young * nu / ((1 + nu) * (1 - 2 * nu))
    mu = young / (2 * (1 + nu))
    d = np.zeros((6, 6))
    d[:3, :3] = lam
    d[np.arange(3), np.arange(3)] += 2 * mu
    d[np.arange(3, 6), np.arange(3, 6)] = mu
    return d


def _shape_grads(xi, eta, zeta):
    """Derivatives of the eight trilinear shape functions, shape (8, 3)."""
    c = _CORNERS
    dn = np.empty((8, 3))
    dn[:, 0] = c[:, 0] * (1 + c[:, 1] * eta) * (1 + c[:, 2] * zeta) / 8
    dn[:, 1] = c[:, 1] * (1 + c[:, 0] * xi) * (1 + c[:, 2] * zeta) / 8
    dn[:, 2] = c[:, 2] * (1 + c[:, 0] * xi) * (1 + c[:, 1] * eta) / 8
    return dn


def strain_displacement(grads: np.ndarray) -> np.ndarray:
    """6x24 B-matrix (Voigt order xx, yy, zz, xy, yz, zx) from physical gradients."""
    bm = np.zeros((6, 24))
    for a in range(8):
        gx, gy, gz = grads[a]
        c = 3 * a
        bm[0, c] = gx
        bm[1, c + 1] = gy
        bm[2, c + 2] = gz
        bm[3, c], bm[3, c + 1] = gy, gx
        bm[4, c + 1], bm[4, c + 2] = gz, gy
        bm[5, c], bm[5, c + 2] = gz, gx
    return bm


def hex8_stiffness(coords: np.ndarray, d: np.ndarray) -> np.ndarray:
    """24x24 stiffness of a trilinear hexahedron, 2x2x2 Gauss rule.

    Raises if the element Jacobian is not positive at any Gauss point.
    """
    ke = np.zeros((24, 24))
    for xi, eta, zeta in itertools.product(_GP, _GP, _GP):
        dn = _shape_grads(xi, eta, zeta)
        jac = dn.T @ coords
        det = np.linalg.det(jac)
        if det <= 0:
            raise GeneratorError("inverted or degenerate element")
        grads = np.linalg.solve(jac, dn.T).T
        bm = strain_displacement(grads)
        ke += bm.T @ d @ bm * det
    return 0.5 * (ke + ke.T)


# -- mesh ----------------------------------------------------------------------


def _node_coords(p: GridParams) -> np.ndarray:
    """Coordinates on the (nx+1, ny+1, nz+1) lattice, with optional smooth distortion.

    The perturbation grades spacing along each axis and shears interior nodes
    tangentially to the fracture plane, so the fracture stays planar.
    """
    counts = p.counts
    s = [np.linspace(0.0, 1.0, n + 1) for n in counts]
    grid = np.stack(np.meshgrid(*s, indexing="ij"), axis=-1)
    d = p.distortion
    if d > 0:
        graded = grid + 0.3 * d * np.sin(np.pi * grid) / np.pi
        frac = AXES.get(p.fracture_axis, 0) if p.fracture_axis else 0
        others = [ax for ax in range(3) if ax != frac]
        bump = np.sin(np.pi * grid[..., 0]) * np.sin(np.pi * grid[..., 1]) * np.sin(np.pi * grid[..., 2])
        for k, ax in enumerate(others):
            h = 1.0 / counts[ax]
            sign = 1.0 if k == 0 else -1.0
            graded[..., ax] += sign * 0.2 * d * h * bump * np.cos(np.pi * grid[..., frac])
        grid = graded
    return grid * np.asarray(p.size, dtype=float)


def _build(p: GridParams, name: str) -> SaddleSystem:
    nx, ny, nz = p.counts
    coords = _node_coords(p)
    lattice = [(i, j, k) for i in range(nx + 1) for j in range(ny + 1) for k in range(nz + 1)]

    frac_ax = AXES[p.fracture_axis] if p.fracture_axis else None
    fk = p.fracture_index

    # node ids: lattice nodes, plus a duplicate for each node on the fracture
    # plane (the duplicate belongs to the "plus" side, index >= fk).
    node_id = {}
    for ijk in lattice:
        node_id[ijk, 0] = len(node_id)
    plus_id = {}
    if frac_ax is not None:
        for ijk in lattice:
            if ijk[frac_ax] == fk:
                plus_id[ijk] = len(node_id) + len(plus_id)
    n_nodes = len(node_id) + len(plus_id)
    xyz = np.zeros((n_nodes, 3))
    for ijk in lattice:
        xyz[node_id[ijk, 0]] = coords[ijk]
        if ijk in plus_id:
            xyz[plus_id[ijk]] = coords[ijk]

    def side_node(ijk, plus: bool) -> int:
        if plus and ijk in plus_id:
            return plus_id[ijk]
        return node_id[ijk, 0]

    # constrained nodes
    fixed = np.zeros(n_nodes, dtype=bool)
    for face in p.dirichlet_faces:
        ax, hi = AXES[face[0]], face[1] == "1"
        target = p.counts[ax] if hi else 0
        for ijk in lattice:
            if ijk[ax] != target:
                continue
            if ijk in plus_id:
                fixed[node_id[ijk, 0]] = True
                fixed[plus_id[ijk]] = True
            else:
                fixed[node_id[ijk, 0]] = True

    dof_of = np.full((n_nodes, 3), -1, dtype=np.int64)
    free = np.flatnonzero(~fixed)
    dof_of[free] = np.arange(3 * len(free)).reshape(-1, 3)
    n_u = 3 * len(free)

    dmat = elasticity_matrix(p.young_modulus, p.poisson_ratio)
    rows, cols, vals = [], [], []
    corner_order = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                    (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    for e in itertools.product(range(nx), range(ny), range(nz)):
        plus = frac_ax is not None and e[frac_ax] >= fk
        nodes = [side_node((e[0] + c[0], e[1] + c[1], e[2] + c[2]), plus) for c in corner_order]
        ke = hex8_stiffness(xyz[nodes], dmat)
        dofs = dof_of[nodes].ravel()
        keep = dofs >= 0
        kd = dofs[keep]
        block = ke[np.ix_(keep, keep)]
        rows.append(np.repeat(kd, len(kd)))
        cols.append(np.tile(kd, len(kd)))
        vals.append(block.ravel())
    a = SparseMatrix.from_coo(np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [],
                              np.concatenate(vals) if vals else [], n_u, n_u)
    # duplicate summation order can differ by an ulp between (i,j) and (j,i)
    a = add(a, transpose(a), 0.5, 0.5)

    # multipliers
    b_rows, b_cols, b_vals = [], [], []
    weights = {}
    pairs = 0
    dropped = 0
    if frac_ax is not None:
        tang = [ax for ax in range(3) if ax != frac_ax]
        for ijk in sorted(plus_id):
            w = _tributary_area(coords, ijk, frac_ax, tang, p.counts)
            minus, plus = node_id[ijk, 0], plus_id[ijk]
            if fixed[minus] and fixed[plus]:
                dropped += 1
                continue
            weights[ijk] = w
            for comp in [frac_ax] + tang:
                col = 3 * pairs + [frac_ax, *tang].index(comp)
                for node, sign in ((plus, 1.0), (minus, -1.0)):
                    dof = dof_of[node, comp]
                    if dof >= 0:
                        b_rows.append(dof)
                        b_cols.append(col)
                        b_vals.append(sign * w)
            pairs += 1
    b = SparseMatrix.from_coo(b_rows, b_cols, b_vals, n_u, 3 * pairs)

    labels = {
        "generator": name,
        "params": p.to_json(),
        "n_u": n_u,
        "n_t": 3 * pairs,
        "interface_pairs": pairs,
        "dropped_pairs": dropped,
        "multiplier_weight": "tributary interface area",
        "multiplier_order": "per node pair: normal, tangential-1, tangential-2",
    }
    return SaddleSystem(a, b, None, labels)


def _tributary_area(coords, ijk, frac_ax, tang, counts) -> float:
    """A quarter of the area of every fracture-plane face touching the node."""
    area = 0.0
    t0, t1 = tang
    for d0 in (-1, 0):
        for d1 in (-1, 0):
            lo0, lo1 = ijk[t0] + d0, ijk[t1] + d1
            if not (0 <= lo0 < counts[t0] and 0 <= lo1 < counts[t1]):
                continue
            quad = []
            for c0, c1 in ((0, 0), (1, 0), (1, 1), (0, 1)):
                idx = list(ijk)
                idx[t0], idx[t1] = lo0 + c0, lo1 + c1
                quad.append(coords[tuple(idx)][[t0, t1]])
            quad = np.array(quad)
            x, y = quad[:, 0], quad[:, 1]
            area += 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return area / 4.0


def _check_dirichlet(p: GridParams) -> tuple[bool, bool]:
    """Which sides of the fracture carry Dirichlet data: (minus, plus)."""
    if not p.dirichlet_faces:
        raise GeneratorError("empty Dirichlet set")
    if p.fracture_axis is None:
        return True, True
    ax = p.fracture_axis
    minus = any(f[0] != ax or f == f"{ax}0" for f in p.dirichlet_faces)
    plus = any(f[0] != ax or f == f"{ax}1" for f in p.dirichlet_faces)
    return minus, plus


def generate_fracture_cube(p: GridParams) -> SaddleSystem:
    """Elastic block with one fully tied fracture; both sides clamped so A is SPD.

    ``fracture_axis=None`` gives a plain elastic block with no multipliers.
    """
    minus, plus = _check_dirichlet(p)
    if not (minus and plus):
        raise GeneratorError("fracture cube needs a Dirichlet face on each side of the fracture")
    return _build(p, "fracture_cube")


def generate_floating_side(p: GridParams | None = None) -> SaddleSystem:
    """Block whose plus side is held only through the fracture multipliers.

    With Dirichlet data on the minus side only, A has a six-dimensional
    rigid-body null space; the saddle matrix stays nonsingular.
    """
    if p is None:
        p = GridParams(dirichlet_faces=("x0",))
    if p.fracture_axis is None:
        raise GeneratorError("floating side needs a fracture")
    minus, _ = _check_dirichlet(p)
    if not minus:
        raise GeneratorError("floating side needs a Dirichlet face on the minus side")
    return _build(p, "floating_side")


def generate_random_spd_saddle(n_u: int, n_t: int, seed: int = 0,
                               density: float = 0.1, col_nnz: int = 3) -> SaddleSystem:
    """Random sparse SPD A = L L^T + delta I and random sparse full-rank B."""
    if not n_u > n_t >= 1:
        raise GeneratorError("need n_u > n_t >= 1")
    rng = np.random.default_rng(seed)
    mask = np.tril(rng.random((n_u, n_u)) < density, -1)
    low = np.where(mask, rng.standard_normal((n_u, n_u)), 0.0)
    low[np.diag_indices(n_u)] = 1.0 + rng.random(n_u)
    llt = low @ low.T
    delta = 1e-3 * spectral_norm_2(llt)
    a_dense = llt + delta * np.eye(n_u)
    a_dense = 0.5 * (a_dense + a_dense.T)
    a = SparseMatrix.from_dense(a_dense)

    k = min(col_nnz, n_u)
    for _ in range(10):
        bd = np.zeros((n_u, n_t))
        for j in range(n_t):
            r = rng.choice(n_u, size=k, replace=False)
            bd[r, j] = rng.standard_normal(k)
        if np.linalg.matrix_rank(bd) == n_t:
            break
    else:
        raise GeneratorError("could not draw a full-rank B in 10 attempts")
    b = SparseMatrix.from_dense(bd)
    labels = {"generator": "random_spd_saddle", "params": {"n_u": n_u, "n_t": n_t, "seed": seed,
                                                           "density": density, "col_nnz": col_nnz}}
    return SaddleSystem(a, b, None, labels)


def verify_system(s: SaddleSystem, tol: float = 1e-10) -> dict:
    """Dense desk-scale checks of the saddle-system invariants (report only)."""
    if s.n > dense_cap():
        raise DenseCapExceeded(f"n={s.n} exceeds dense cap {dense_cap()}")
    a = s.a.to_dense()
    sym_defect = float(np.abs(a - a.T).max()) if a.size else 0.0
    eig = np.linalg.eigvalsh(a)
    a_norm = float(np.abs(eig).max()) if len(eig) else 0.0
    nullity = int(np.sum(eig <= 1e-10 * a_norm))
    if s.n_t:
        sigma_min = float(np.linalg.svd(s.b.to_dense(), compute_uv=False).min())
    else:
        sigma_min = None
    full = s.to_dense()
    rank = int(np.linalg.matrix_rank(full))
    checks = {
        "a_symmetric": is_symmetric(s.a),
        "a_spsd": bool(eig.min() >= -tol * a_norm),
        "b_full_rank": s.n_t == 0 or sigma_min > 1e-12 * max(1.0, s.b.max_abs()),
        "n_u_gt_n_t": s.n_u > s.n_t,
        "saddle_nonsingular": rank == s.n,
    }
    if nullity == 0:
        summary = "A SPD" + (", B full rank" if checks["b_full_rank"] else ", B rank deficient")
    else:
        summary = f"A singular, nullity {nullity}"
    return {
        "n_u": s.n_u,
        "n_t": s.n_t,
        "symmetry_defect": sym_defect,
        "lambda_min_a": float(eig.min()),
        "lambda_max_a": float(eig.max()),
        "nullity_a": nullity,
        "sigma_min_b": sigma_min,
        "rank_saddle": rank,
        "checks": checks,
        "ok": all(checks.values()),
        "summary": summary,
    }


def sidecar_json(s: SaddleSystem) -> str:
    return json.dumps(s.labels, indent=2, sort_keys=True)
