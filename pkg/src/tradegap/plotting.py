"""Figures written next to the CLI reports (Agg backend, no timestamps in metadata)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_equilibrium(model, eq, path: Path) -> Path:
    half = model.quadrature.truncation_width * np.sqrt(model.T) / 2
    x = np.linspace(-half, half, 801)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, model.f(x), label="endowment f(x)")
        ax.plot(x, eq.a - model.f(x), label="net trade a - f(x)")
        ax.axhline(eq.a, color="k", lw=0.8, ls="--", label=f"consumption a = {eq.a:.5f}")
        ax.axhline(0, color="0.5", lw=0.6)
        ax.set_xlabel("B(T)")
        ax.legend()
        return _save(fig, path)


def plot_search(log_by_cells: dict, eps_star: float, diagnostic: float, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        cells = sorted(log_by_cells)
        ax.plot(cells, [log_by_cells[c] for c in cells], "o-", label="best feasible distance")
        ax.axhline(eps_star, color="C3", ls="--", label=f"gap eps* = {eps_star:.5f}")
        ax.axhline(diagnostic, color="C2", ls=":", label="unconstrained, most cells")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("cells")
        ax.set_ylabel("L2 distance to net trade")
        ax.legend()
        return _save(fig, path)


def plot_deviation(t_grid, deviations, epsilon: float, witness: float, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t_grid, deviations, label="sup |E[f(B(T)) | B(t)=x] - f(x)|")
        ax.axhline(epsilon, color="C3", ls="--", label=f"epsilon = {epsilon:g}")
        ax.axvline(witness, color="k", lw=0.8, ls=":", label=f"t(eps) = {witness:g}")
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_event_probability(t_grid, probs, t_star: float, p_T: float, path: Path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(t_grid, probs, label="P(F_t)")
        ax.axhline(p_T / 2, color="C3", ls="--", label="P(F_T) / 2")
        ax.axvline(t_star, color="k", lw=0.8, ls=":", label=f"t* = {t_star:g}")
        ax.set_xlabel("t")
        ax.legend()
        return _save(fig, path)


def plot_convergence(table, path: Path) -> Path:
    N = table.column("N")
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
        ax1.loglog(N, table.column("l2_error"), "o-")
        ax1.set_xlabel("rebalances N")
        ax1.set_ylabel("L2 error to net trade")
        ax2.semilogx(N, table.column("viol_prob"), "o-", color="C3")
        ax2.set_xlabel("rebalances N")
        ax2.set_ylabel("P(wealth < 0)")
        return _save(fig, path)
