"""Static figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
}


def _figure(width=5.0, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height or width * golden))


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(histories: dict, path, tol: float | None = None):
    """Relative residual against iteration, one line per labelled history."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for label, hist in histories.items():
            rel = hist.relative()
            ax.semilogy(np.arange(len(rel)), rel, label=label)
        if tol is not None:
            ax.axhline(tol, color="k", ls=":", lw=0.8)
        ax.set_xlabel("iteration")
        ax.set_ylabel(r"$\|r_k\|_2 / \|r_0\|_2$")
        if len(histories) > 1:
            ax.legend()
        return _save(fig, path)


def plot_spectrum(report, path):
    """Eigenvalues in the complex plane with the bound region drawn on top."""
    ev = np.asarray(report.eigenvalues, dtype=complex)
    iv = report.intervals or {}
    with plt.rc_context(STYLE):
        fig, ax = _figure(5.0, 4.0)
        ax.plot(ev.real, ev.imag, "o", ms=3, mfc="none", label="eigenvalues")
        if report.variant == "M" and iv:
            lo, hi = iv["complex_re"]
            im = iv["complex_im_max"]
            ax.add_patch(plt.Rectangle((lo, -im), hi - lo, 2 * im, fill=False, ec="C3",
                                       ls="--", label="complex bound"))
            rlo = iv.get("real_lower")
            ax.plot([rlo if rlo is not None else 0.0, iv["real_upper"]], [0, 0], "C2-", lw=3,
                    alpha=0.5, label="real bound")
        elif report.variant == "Ma" and iv:
            for k, key in enumerate(("negative", "positive")):
                ax.plot(iv[key], [0, 0], "C2-", lw=3, alpha=0.5, label="bound" if k == 0 else None)
        ax.set_xlabel(r"Re $\lambda$")
        ax.set_ylabel(r"Im $\lambda$")
        ax.set_title(f"spectrum ({report.variant})")
        ax.legend(loc="best")
        return _save(fig, path)


def plot_compare(rows: list[dict], path, x_key: str = "label"):
    """Iteration counts per configuration; failed runs are marked with a cross."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        labels = [str(r[x_key]) for r in rows]
        its = [r["n_it"] if r["converged"] else 0 for r in rows]
        bars = ax.bar(range(len(rows)), its, color="C0")
        for k, r in enumerate(rows):
            if not r["converged"]:
                bars[k].set_color("0.8")
                ax.text(k, 0, "x", ha="center", va="bottom", color="C3")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_ylabel("GMRES iterations")
        return _save(fig, path)
