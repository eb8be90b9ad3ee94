"""Figure rendering for the report path: energy, dissipation, indicators.

Figures are written next to the delimited output of a run so a finished
output directory is self-describing.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .diagnostics import INDICATOR_NAMES


def _positive(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, y, np.nan)


def render_run_figures(outdir, ledger, state, spaces) -> list:
    """Render the standard report figures; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    t = ledger.column("t")
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in ("E_mech", "E_adh", "E_imp", "E_th", "E_visc", "L_total"):
        ax.plot(t, ledger.column(key), label=key)
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.set_title("free energy breakdown")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "energy.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in ("D_total", "D_grad_theta", "D_visc", "D_grad_theta_s", "D_chi_rate", "D_exchange"):
        ax.semilogy(t, _positive(ledger.column(key)), label=key)
    ax.set_xlabel("t")
    ax.set_ylabel("dissipation rate")
    ax.set_title("dissipation breakdown")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "dissipation.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in INDICATOR_NAMES:
        ax.semilogy(t, _positive(ledger.column(key)), label=key)
    ax.set_xlabel("t")
    ax.set_ylabel("indicator")
    ax.set_title("equilibrium indicators")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "indicators.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    s = spaces.surface.arclength
    axes[0].plot(s, state.chi, "o-", ms=3)
    axes[0].set_xlabel("arclength")
    axes[0].set_ylabel("adhesion chi")
    axes[1].plot(s, state.theta_s, "o-", ms=3, label="theta_s")
    axes[1].plot(s, spaces.trace_scalar(state.theta), "s--", ms=3, label="theta trace")
    axes[1].set_xlabel("arclength")
    axes[1].legend(fontsize=8)
    fig.suptitle("contact line profiles at the final time")
    fig.tight_layout()
    path = os.path.join(outdir, "contact_profiles.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written


def render_sweep_figure(outdir, chains) -> str:
    """Distance-chain plot for parameter sweeps.

    chains: mapping name -> (parameter values, successive distances).
    """
    os.makedirs(outdir, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    plotted = False
    for name, (params, dists) in chains.items():
        if len(dists) == 0:
            continue
        ax.loglog(params[1:], dists, "o-", label=name)
        plotted = True
    ax.set_xlabel("parameter")
    ax.set_ylabel("distance to previous final state")
    ax.set_title("two-stage limit stability")
    if plotted:
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(outdir, "sweep_distances.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
