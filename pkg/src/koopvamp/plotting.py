"""Static figures for CV curves, singular functions and transition densities.

Everything renders through the Agg backend to files; nothing is shown
interactively.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_cv", "plot_singular_functions", "plot_field", "plot_density", "plot_spectrum"]

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def _figure(width=6.0, height=None, **kw):
    return plt.subplots(figsize=(width, height or width * GOLDEN), **kw)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cv(report, path, exact=None):
    """Mean train and test scores against basis size.

    Parameters
    ----------
    report : CvReport
    path : str or Path
    exact : sequence of float, optional
        Exact scores per grid point, drawn as a reference line.
    """
    m = np.array([p.m for p in report.grid])
    order = np.argsort(m, kind="stable")
    test = np.array(report.mcv)
    train = np.array(report.train_means())
    fig, ax = _figure()
    ax.plot(m[order], train[order], "o-", color="tab:blue", label="train")
    ax.plot(m[order], test[order], "s-", color="tab:red", label="test (MCV)")
    if exact is not None:
        ax.plot(m[order], np.asarray(exact)[order], "k-", label="exact")
    ax.axvline(report.best.m, color="0.6", ls="--", lw=0.8)
    ax.set_xlabel("m")
    ax.set_ylabel(report.score_spec.label())
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_singular_functions(x, funcs, path, labels=None, reference=None):
    """Line plot of singular functions on a 1D grid ``x``.

    ``funcs`` is ``(n, k)``; ``reference`` (same shape) is dashed.
    """
    funcs = np.atleast_2d(np.asarray(funcs).T).T
    fig, ax = _figure()
    for i in range(funcs.shape[1]):
        lab = labels[i] if labels else f"{i + 1}"
        line, = ax.plot(x, funcs[:, i], label=lab)
        if reference is not None:
            ax.plot(x, np.asarray(reference)[:, i], ls="--", color=line.get_color())
    ax.set_xlabel("x")
    ax.legend(frameon=False, ncol=2)
    return _save(fig, path)


def plot_field(values, bounds, bins, path, title=""):
    """Heat map of one function on a 2D bin grid (row-major, last axis fastest)."""
    arr = np.asarray(values).reshape(bins)
    fig, ax = _figure()
    (x0, x1), (y0, y1) = bounds
    im = ax.imshow(arr.T, origin="lower", extent=(x0, x1, y0, y1), aspect="auto", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    return _save(fig, path)


def plot_density(density, bounds, path, title="transition density"):
    """Heat map of a transition density ``p(x, y)`` on a square 1D grid."""
    lo, hi = bounds[0]
    fig, ax = _figure(5.0, 5.0)
    im = ax.imshow(density.T, origin="lower", extent=(lo, hi, lo, hi), cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(title)
    return _save(fig, path)


def plot_spectrum(sigma, path, k=None):
    fig, ax = _figure()
    idx = np.arange(1, len(sigma) + 1)
    ax.plot(idx, sigma, ".", color="k")
    if k:
        ax.plot(idx[:k], sigma[:k], "o", mfc="none", color="tab:red")
    ax.set_xlabel("i")
    ax.set_ylabel("singular value")
    ax.set_xscale("log")
    return _save(fig, path)
