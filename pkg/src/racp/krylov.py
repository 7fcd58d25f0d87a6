"""Right-preconditioned restarted GMRES with residual history."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .preconditioners import cost_model
from .problem_gen import SaddleSystem


@dataclass(frozen=True)
class GmresConfig:
    restart: int = 100
    rel_tol: float = 1e-8
    max_iters: int = 1000
    record_history: bool = True
    reorth_threshold: float = 1e-8

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class ConvergenceHistory:
    residual_norms: list = field(default_factory=list)
    residual_kind: list = field(default_factory=list)  # "true" or "arnoldi"
    iterations: int = 0
    converged: bool = False
    restarts: int = 0
    final_estimate: float = float("nan")
    final_true: float = float("nan")
    c_app: float = 0.0
    solve_cost_Cs: float = 0.0
    reason: str = ""

    def relative(self) -> np.ndarray:
        r = np.asarray(self.residual_norms, dtype=float)
        return r / r[0] if len(r) and r[0] > 0 else r

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "relative_residual"])
            for i, r in enumerate(self.relative()):
                w.writerow([i, f"{r:.16e}"])


def _as_map(op):
    if callable(op):
        return op
    if hasattr(op, "apply"):
        return op.apply
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def gmres(operator, precond, b, cfg: GmresConfig | None = None, x0=None):
    """Solve op(x) = b with GMRES(restart) on op∘precond; x = precond(y).

    Orthogonalization is modified Gram-Schmidt with one extra pass when the
    new Arnoldi vector keeps a component above ``reorth_threshold`` along
    the basis.  The true residual is recomputed at every restart and at exit.
    Returns ``(x, history)``; on hitting ``max_iters`` the best iterate seen
    at a restart boundary is returned with ``converged=False``.
    """
    cfg = cfg or GmresConfig()
    op = _as_map(operator)
    pc = _as_map(precond) if precond is not None else (lambda v: np.array(v, copy=True))
    b = np.asarray(b, dtype=float)
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        raise ValueError("right-hand side must be nonzero")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    hist = ConvergenceHistory()
    hist.residual_norms.append(beta)
    hist.residual_kind.append("true")
    target = cfg.rel_tol * beta
    best_x, best_res = x.copy(), beta
    m = cfg.restart

    while beta > target and hist.iterations < cfg.max_iters:
        V = np.zeros((n, m + 1))
        H = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[:, 0] = r / beta
        k = 0
        breakdown = False
        while k < m and hist.iterations < cfg.max_iters:
            w = op(pc(V[:, k]))
            wnorm0 = np.linalg.norm(w)
            for i in range(k + 1):
                H[i, k] = V[:, i] @ w
                w -= H[i, k] * V[:, i]
            wnorm = np.linalg.norm(w)
            if wnorm > 0 and np.max(np.abs(V[:, : k + 1].T @ w)) > cfg.reorth_threshold * wnorm:
                for i in range(k + 1):
                    h = V[:, i] @ w
                    H[i, k] += h
                    w -= h * V[:, i]
                wnorm = np.linalg.norm(w)
            H[k + 1, k] = wnorm
            for i in range(k):
                t = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = t
            denom = np.hypot(H[k, k], H[k + 1, k])
            if denom == 0:
                breakdown = True
                break
            cs[k], sn[k] = H[k, k] / denom, H[k + 1, k] / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            hist.iterations += 1
            est = abs(g[k])
            if cfg.record_history:
                hist.residual_norms.append(est)
                hist.residual_kind.append("arnoldi")
            hist.final_estimate = est
            if est <= target:
                break
            if wnorm <= 1e-14 * max(wnorm0, 1.0):
                breakdown = True  # lucky breakdown: Krylov space is invariant
                break
            V[:, k] = w / wnorm
        if k > 0:
            y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
            x = x + pc(V[:, :k] @ y)
        r = b - op(x)
        beta = np.linalg.norm(r)
        if beta < best_res:
            best_x, best_res = x.copy(), beta
        hist.restarts += 1
        if cfg.record_history and k > 0:
            hist.residual_norms[-1] = beta
            hist.residual_kind[-1] = "true"
        if breakdown and k == 0:
            break
        if breakdown and beta > target:
            # invariant subspace reached but true residual disagrees: restart once more
            continue

    hist.final_true = beta
    hist.converged = bool(beta <= target)
    if not cfg.record_history:
        hist.residual_norms.append(beta)
        hist.residual_kind.append("true")
    if not hist.converged:
        hist.reason = "max_iters exceeded" if hist.iterations >= cfg.max_iters else "stagnation"
        x = best_x
        hist.final_true = best_res
    return x, hist


def solve_saddle(system: SaddleSystem, precond, cfg: GmresConfig | None = None, rhs=None):
    """GMRES on the saddle matrix with a unit right-hand side by default."""
    if system.n_t and np.any(np.diff(system.bt.row_offsets) == 0):
        raise ValueError("B has an empty column")
    cfg = cfg or GmresConfig()
    b = system.right_hand_side() if rhs is None else np.asarray(rhs, dtype=float)
    x, hist = gmres(system.matvec, precond, b, cfg)
    hist.c_app = cost_model(precond, system)["c_app"]
    hist.solve_cost_Cs = hist.iterations * (hist.c_app + 1.0)
    return x, hist
