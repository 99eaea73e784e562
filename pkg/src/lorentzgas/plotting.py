"""Figure rendering for reports: free-path densities against analytic
curves, kernel slices, tail fits, and count statistics.

Figures are written straight to files (SVG by default) next to the
delimited output; `emit_gnuplot` writes a .dat/.gp pair instead for
pipelines that post-process plots elsewhere.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import kernels as kr


def _save(fig, path):
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def phi0_figure(hist, analytic, path, xi_max=4.0, title="free path density"):
    """Histogram density vs an analytic curve, linear and log panels."""
    centers = hist.centers()
    dens = hist.density()
    sel = centers <= xi_max
    xg = np.linspace(1e-3, xi_max, 400)
    yg = analytic(xg)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.4))
    axes[0].step(centers[sel], dens[sel], where="mid", lw=1.0,
                 label="simulation")
    axes[0].plot(xg, yg, "k--", lw=1.0, label="analytic")
    axes[0].set_xlabel(r"$\xi$")
    axes[0].set_ylabel(r"$\bar\Phi_0(\xi)$")
    axes[0].legend(frameon=False)
    pos = dens > 0
    axes[1].loglog(centers[pos], dens[pos], ".", ms=3, label="simulation")
    xl = np.geomspace(max(centers[pos].min(), 1e-2), centers[pos].max(), 300)
    axes[1].loglog(xl, analytic(xl), "k--", lw=1.0, label="analytic")
    axes[1].set_xlabel(r"$\xi$")
    axes[1].legend(frameon=False)
    fig.suptitle(title)
    return _save(fig, path)


def tail_figure(hist, slope, intercept, C, path, window=(5.0, 50.0)):
    centers = hist.centers()
    dens = hist.density()
    pos = (dens > 0) & (centers > 0)
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.loglog(centers[pos], dens[pos], ".", ms=3, label="simulation")
    xl = np.geomspace(window[0] / 2, window[1] * 2, 200)
    ax.loglog(xl, np.exp(intercept) * xl ** slope, "r-", lw=1.0,
              label=f"fit slope {slope:.2f}")
    ax.loglog(xl, C / xl ** 3, "k--", lw=1.0, label=r"$C/\xi^3$")
    ax.axvspan(*window, color="0.9")
    ax.set_xlabel(r"$\xi$")
    ax.set_ylabel(r"$\bar\Phi_0(\xi)$")
    ax.legend(frameon=False)
    return _save(fig, path)


def kernel_slices_figure(emp, path, nbar=1.0, slices=(2, 6, 10, 14)):
    """Empirical kernel w-profiles in chosen (w', xi) slices vs the
    analytic formula (cell-averaged)."""
    dens = emp.density()
    wc = 0.5 * (emp.w_edges[1:] + emp.w_edges[:-1])
    fig, axes = plt.subplots(2, 2, figsize=(8, 6), sharex=True)
    xi_idx = len(emp.xi_edges) // 4
    xi_lo, xi_hi = emp.xi_edges[xi_idx], emp.xi_edges[xi_idx + 1]
    nodes, wts = np.polynomial.legendre.leggauss(5)
    for ax, iwp in zip(axes.ravel(), slices):
        wp_lo, wp_hi = emp.wp_edges[iwp], emp.wp_edges[iwp + 1]
        ax.step(wc, dens[iwp, xi_idx], where="mid", lw=1.0,
                label="simulation")
        kbar = np.zeros_like(wc)
        for a in range(5):
            for b in range(5):
                wpv = 0.5 * (wp_lo + wp_hi) + 0.5 * (wp_hi - wp_lo) * nodes[a]
                xiv = 0.5 * (xi_lo + xi_hi) + 0.5 * (xi_hi - xi_lo) * nodes[b]
                kbar += wts[a] * wts[b] * kr.lattice_kernel_2d(
                    wpv, xiv, wc, nbar)
        kbar /= 4.0
        ax.plot(wc, kbar, "k--", lw=1.0, label="analytic")
        ax.set_title(f"$w' \\in [{wp_lo:.2f}, {wp_hi:.2f})$, "
                     f"$\\xi \\in [{xi_lo:.2f}, {xi_hi:.2f})$", fontsize=9)
    axes[0, 0].legend(frameon=False, fontsize=8)
    for ax in axes[-1]:
        ax.set_xlabel("$w$")
    fig.tight_layout()
    return _save(fig, path)


def counts_figure(counts_by_r, box_labels, path):
    """Count distributions of the renormalized process at several r."""
    rs = sorted(counts_by_r, reverse=True)
    n_boxes = len(next(iter(counts_by_r.values())))
    fig, axes = plt.subplots(1, n_boxes, figsize=(3.2 * n_boxes, 3.0),
                             sharey=True)
    if n_boxes == 1:
        axes = [axes]
    for j, ax in enumerate(axes):
        kmax = int(max(counts_by_r[r][j].max() for r in rs))
        for r in rs:
            pmf = np.bincount(counts_by_r[r][j], minlength=kmax + 1)
            pmf = pmf / pmf.sum()
            ax.plot(np.arange(kmax + 1), pmf, "o-", ms=3, lw=0.8,
                    label=f"r={r:g}")
        ax.set_title(box_labels[j], fontsize=9)
        ax.set_xlabel("count")
    axes[0].set_ylabel("probability")
    axes[0].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def emit_gnuplot(path_base, columns, header, plot_cmds):
    """Write a whitespace .dat file plus a gnuplot script referencing it."""
    dat = path_base + ".dat"
    gp = path_base + ".gp"
    arr = np.column_stack(columns)
    with open(dat, "w") as f:
        f.write("# " + "  ".join(header) + "\n")
        for row in arr:
            f.write("  ".join(f"{v:.17g}" for v in row) + "\n")
    with open(gp, "w") as f:
        f.write("set datafile commentschars '#'\n")
        f.write(f"datafile = '{os.path.basename(dat)}'\n")
        for cmd in plot_cmds:
            f.write(cmd + "\n")
    return dat, gp
