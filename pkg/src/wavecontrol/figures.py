"""Matplotlib figure rendering for the report path.

Figures are written next to the delimited output of each run: convergence
curves for the iterate logs, space-time heatmaps for states and controls,
and the probe's ratio-versus-potential plot.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import SpaceTimeField

__all__ = ["save_convergence", "save_heatmap", "save_probe", "save_comparison"]

_DPI = 150


def save_convergence(records, path, title="convergence"):
    """Semilog E_k (or sup-norm increment) with the step-size trajectory."""
    ks = [getattr(r, "k") for r in records]
    es = [getattr(r, "E", None) for r in records]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    if any(e is not None for e in es):
        ax.semilogy(ks, [e if e and e > 0 else np.nan for e in es], "o-", color="tab:blue", label="E")
        ax.set_ylabel("E")
    else:
        incs = [r.increment_inf for r in records]
        ax.semilogy(ks, [i if i > 0 else np.nan for i in incs], "s-", color="tab:blue",
                    label="sup-norm increment")
        ax.set_ylabel("increment")
    ax.set_xlabel("iteration k")
    ax.grid(True, alpha=0.3)
    lams = [getattr(r, "lambda_", None) for r in records]
    if any(l is not None for l in lams):
        ax2 = ax.twinx()
        ax2.plot(ks, [l if l is not None else np.nan for l in lams], "d--", color="tab:red",
                 label="lambda")
        ax2.set_ylabel("lambda", color="tab:red")
        ax2.tick_params(axis="y", labelcolor="tab:red")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_heatmap(field: SpaceTimeField, path, title=""):
    g = field.grid
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    vmax = float(np.abs(field.values).max()) or 1.0
    im = ax.imshow(field.values.T, origin="lower", aspect="auto",
                   extent=[0.0, g.T, 0.0, 1.0], cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xlabel("t")
    ax.set_ylabel("x")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_probe(report, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, m in enumerate(report.magnitudes):
        ax.plot([np.sqrt(m)] * report.samples, report.ratios[i], "o", color="tab:blue", alpha=0.6)
    xs = np.linspace(0.0, max(np.sqrt(max(report.magnitudes)), 1e-9), 50)
    ax.plot(xs, np.exp(report.intercept + report.slope * xs), "-", color="tab:red",
            label=f"fit slope {report.slope:.3f}")
    ax.set_yscale("log")
    ax.set_xlabel(r"sqrt(potential magnitude)")
    ax.set_ylabel("control norm / data norm")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_comparison(series, path, title="method comparison"):
    """series: list of (method, ks, values, ylabel_kind) with values on a log scale."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for method, ks, vals in series:
        ax.semilogy(ks, [v if v and v > 0 else np.nan for v in vals], "o-", label=method)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("E or sup-norm increment")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
