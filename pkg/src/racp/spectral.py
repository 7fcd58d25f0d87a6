"""Desk-scale eigenvalue checks for the preconditioned saddle operator.

The bound quantities are computed through the symmetric square root of the
inner solver's SPD form Ŝ (the matrix whose inverse the inner solver applies):

    alpha_u, beta_u : extreme eigenvalues of Ŝ^-1/2 (S_u + B C^-1 B^T) Ŝ^-1/2
    alpha_t, beta_t : extreme singular values of Ŝ^-1/2 B C^-1/2
    alpha_a, beta_a : extreme eigenvalues of Ŝ^-1/2 A Ŝ^-1/2
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .augmentation import form_primal_schur, ideal_augmentation
from .preconditioners import InnerSolver, RacpPreconditioner, build_inner_solver
from .problem_gen import SaddleSystem
from .sparse import DenseCapExceeded, dense_cap, dense_eigensolve

REAL_TOL = 1e-10


@dataclass(frozen=True)
class BoundQuantities:
    alpha_u: float
    beta_u: float
    alpha_t: float
    beta_t: float
    alpha_a: float
    beta_a: float


@dataclass
class SpectralReport:
    variant: str
    eigenvalues: np.ndarray
    bounds: BoundQuantities | None
    containment: np.ndarray
    intervals: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.containment)) and not self.flags.get("violations")

    def to_json(self) -> dict:
        ev = np.asarray(self.eigenvalues, dtype=complex)
        return {
            "schema": "racp.spectral_report/1",
            "variant": self.variant,
            "n": int(len(ev)),
            "eigenvalues": [[float(z.real), float(z.imag)] for z in ev],
            "bounds": asdict(self.bounds) if self.bounds is not None else None,
            "intervals": self.intervals,
            "containment": [bool(c) for c in self.containment],
            "passed": self.passed,
            "flags": self.flags,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _check_cap(n: int) -> None:
    if n > dense_cap():
        raise DenseCapExceeded(f"n={n} exceeds dense cap {dense_cap()} (set RACP_DENSE_CAP)")


def preconditioned_operator(system: SaddleSystem, precond) -> np.ndarray:
    """Dense P^-1 A, one preconditioner application per column of A."""
    _check_cap(system.n)
    full = system.to_dense()
    return np.asarray(precond.apply(full))


def preconditioned_spectrum(system: SaddleSystem, precond) -> np.ndarray:
    return dense_eigensolve(preconditioned_operator(system, precond))


def ideal_preconditioner(system: SaddleSystem, variant: str = "M") -> RacpPreconditioner:
    """RACP with C = B^T A^-1 B and an exact inner solve.

    With variant ``M`` the operator is the inverse of [[A, B], [B^T, -C]];
    with ``Ma`` it is the inverse of [[A, B], [-B^T, C]].
    """
    c = ideal_augmentation(system.a, system.b)
    return RacpPreconditioner.build(system, variant, c=c, inner="exact_factor")


def ideal_spectrum(system: SaddleSystem, which: str = "hat") -> np.ndarray:
    variant = {"hat": "M", "bar": "Ma"}[which]
    return preconditioned_spectrum(system, ideal_preconditioner(system, variant))


def count_clusters(eigs, centers, tol: float = 1e-8) -> list[int]:
    """How many eigenvalues sit within ``tol`` of each center (nearest-center assignment)."""
    eigs = np.asarray(eigs, dtype=complex)
    centers = np.asarray(centers, dtype=float)
    dist = np.abs(eigs[:, None] - centers[None, :])
    nearest = dist.argmin(axis=1)
    close = dist[np.arange(len(eigs)), nearest] <= tol
    return [int(np.sum(close & (nearest == k))) for k in range(len(centers))]


def _inv_sqrt_sym(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    if w.min() <= 0:
        raise ValueError("matrix is not positive definite")
    return (v / np.sqrt(w)) @ v.T


def bound_quantities(system: SaddleSystem, c, inner: InnerSolver) -> BoundQuantities:
    """Compute the six bound quantities; needs ``inner.spd_form``."""
    _check_cap(system.n)
    try:
        s_hat = inner.spd_form.to_dense()
    except NotImplementedError:
        raise ValueError(f"inner solver {inner.kind!r} has no SPD form; bounds unavailable") from None
    r = _inv_sqrt_sym(s_hat)
    a = system.a.to_dense()
    b = system.b.to_dense()
    bcb = b @ c.solve(b.T)
    s_u = a + bcb
    lead = r @ (s_u + bcb) @ r
    lu = np.linalg.eigvalsh(0.5 * (lead + lead.T))
    f = r @ b @ c.inv_sqrt()
    sv = np.linalg.svd(f, compute_uv=False)
    aa = r @ a @ r
    la = np.linalg.eigvalsh(0.5 * (aa + aa.T))
    return BoundQuantities(float(lu[0]), float(lu[-1]), float(sv.min()), float(sv.max()),
                           float(la[0]), float(la[-1]))


def _slack(bound: float) -> float:
    return 1e-8 * (1.0 + abs(bound))


def m_intervals(q: BoundQuantities) -> dict:
    disc = q.beta_u ** 2 - 4 * q.alpha_t ** 2
    out = {"real_upper": q.beta_u,
           "complex_re": [q.alpha_u / 2, q.beta_u / 2],
           "complex_im_max": math.sqrt(max(q.beta_t ** 2 - q.alpha_u ** 2 / 4, 0.0)),
           "complex_allowed": not (2 * q.beta_t < q.alpha_u)}
    if disc >= 0:
        branch = 2 * q.alpha_t ** 2 / (q.beta_u + math.sqrt(disc))
        out["real_lower"] = min(q.alpha_u, branch)
        out["real_lower_branch_defined"] = True
    else:
        out["real_lower"] = None
        out["real_lower_branch_defined"] = False
    return out


def ma_intervals(q: BoundQuantities) -> dict:
    neg = [(q.alpha_a - math.sqrt(q.alpha_a ** 2 + 4 * q.beta_t ** 2)) / 2,
           (q.beta_a - math.sqrt(q.beta_a ** 2 + 4 * q.alpha_t ** 2)) / 2]
    pos = [q.alpha_a, (q.beta_a + math.sqrt(q.beta_a ** 2 + 4 * q.beta_t ** 2)) / 2]
    return {"negative": neg, "positive": pos}


def _inside(x: float, lo: float, hi: float) -> bool:
    return lo - _slack(lo) <= x <= hi + _slack(hi)


def check_bounds(eigs, q: BoundQuantities, variant: str) -> SpectralReport:
    """Containment of each eigenvalue in the bound region for ``variant``.

    ``M``: real eigenvalues in [real_lower, beta_u]; complex ones with real part
    in [alpha_u/2, beta_u/2] and |Im| under the imaginary bound; no complex
    eigenvalues at all when 2 beta_t < alpha_u.  If beta_u^2 < 4 alpha_t^2 the
    second branch of the real lower bound is undefined; only the upper bound
    is then tested for real eigenvalues and the event is flagged.

    ``Ma``: every eigenvalue real (|Im| <= 1e-8 max|lambda|) and inside the
    union of the negative and positive intervals.
    """
    eigs = np.asarray(eigs, dtype=complex)
    flags: dict = {"violations": []}
    ok = np.ones(len(eigs), dtype=bool)
    if variant == "M":
        iv = m_intervals(q)
        if not iv["real_lower_branch_defined"]:
            flags["real_lower_branch_undefined"] = True
        is_real = np.abs(eigs.imag) <= REAL_TOL * (1 + np.abs(eigs))
        for k, z in enumerate(eigs):
            if is_real[k]:
                lo = iv["real_lower"]
                good = z.real <= iv["real_upper"] + _slack(iv["real_upper"])
                if lo is not None:
                    good &= z.real >= lo - _slack(lo)
            else:
                re_lo, re_hi = iv["complex_re"]
                im_hi = iv["complex_im_max"]
                good = (_inside(z.real, re_lo, re_hi)
                        and abs(z.imag) <= im_hi + _slack(im_hi)
                        and iv["complex_allowed"])
            ok[k] = good
        n_complex = int(np.sum(~is_real))
        flags["n_complex"] = n_complex
        if not iv["complex_allowed"] and n_complex:
            flags["violations"].append("complex eigenvalues although 2*beta_t < alpha_u")
        flags["min_real_part"] = float(eigs.real.min()) if len(eigs) else None
    elif variant == "Ma":
        iv = ma_intervals(q)
        rho = float(np.abs(eigs).max()) if len(eigs) else 0.0
        max_im = float(np.abs(eigs.imag).max()) if len(eigs) else 0.0
        flags["max_abs_imag"] = max_im
        if max_im > 1e-8 * rho:
            flags["violations"].append("non-real eigenvalues")
        if q.alpha_a <= 1e-12 * max(abs(q.beta_a), 1.0):
            flags["degenerate_alpha_a"] = True
        for k, z in enumerate(eigs):
            x = z.real
            ok[k] = _inside(x, *iv["negative"]) or _inside(x, *iv["positive"])
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if not np.all(ok):
        flags["violations"].append(f"{int(np.sum(~ok))} eigenvalues outside the bounds")
    return SpectralReport(variant, eigs, q, ok, iv, flags)


def verify_preconditioner(system: SaddleSystem, precond: RacpPreconditioner) -> SpectralReport:
    """Spectrum + bounds + containment for a built RACP preconditioner."""
    eigs = preconditioned_spectrum(system, precond)
    q = bound_quantities(system, precond.c, precond.inner)
    return check_bounds(eigs, q, precond.variant)


def ideal_report(system: SaddleSystem, which: str = "hat", tol: float = 1e-8) -> SpectralReport:
    """Spectrum of the ideal operators with cluster counts against {1, +-0.5}."""
    eigs = ideal_spectrum(system, which)
    centers = [1.0, 0.5 if which == "hat" else -0.5]
    counts = count_clusters(eigs, centers, tol)
    expected = [system.n_u, system.n_t]
    ok = np.abs(eigs[:, None] - np.asarray(centers)[None, :]).min(axis=1) <= tol
    flags = {"cluster_centers": centers, "cluster_counts": counts, "expected_counts": expected,
             "violations": [] if counts == expected else ["cluster counts differ from expectation"]}
    return SpectralReport(f"ideal_{which}", eigs, None, ok, {}, flags)


def exact_inner(system: SaddleSystem, c) -> InnerSolver:
    return build_inner_solver("exact_factor", form_primal_schur(system.a, system.b, c))
