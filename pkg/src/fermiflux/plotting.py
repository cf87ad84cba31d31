"""Static SVG line charts of a trajectory.

Solid lines are reservoir trajectories, dot-dashed lines the equilibrium
asymptote, dotted lines the crossover frequency of each pair and dashed lines
the mode frequencies. Time is on a log axis, so the ``t = 0`` row is omitted.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .dynamics import Trajectory  # noqa: E402


def _axes(title, ylabel):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return fig, ax


def _save(fig, ax, path):
    ax.legend(fontsize="small", loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_trajectory(traj: Trajectory, out_dir, T_eq=None, mu_eq=None, name="") -> list[Path]:
    """Write ``plot_T.svg`` and ``plot_mu.svg`` into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    keep = traj.t > 0
    t = traj.t[keep]
    n = traj.n_reservoirs
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    paths = []

    fig, ax = _axes(f"{name} temperatures".strip(), "T / T~")
    for j in range(n):
        ax.plot(t, traj.T[keep, j], "-", color=colors[j % len(colors)], label=f"T{j + 1}")
    if T_eq is not None:
        ax.axhline(T_eq, linestyle="-.", color="k", linewidth=0.8, label="T_eq")
    paths.append(out_dir / "plot_T.svg")
    _save(fig, ax, paths[-1])

    fig, ax = _axes(f"{name} chemical potentials".strip(), "mu / T~")
    for j in range(n):
        ax.plot(t, traj.mu[keep, j], "-", color=colors[j % len(colors)], label=f"mu{j + 1}")
    if mu_eq is not None:
        ax.axhline(mu_eq, linestyle="-.", color="k", linewidth=0.8, label="mu_eq")
    lo, hi = ax.get_ylim()
    for c, (a, b) in enumerate(traj.pairs):
        wt = traj.omega_tilde[keep, c]
        # the crossover diverges at temperature swaps; clip to the visible band
        wt = np.where((wt > lo - (hi - lo)) & (wt < hi + (hi - lo)), wt, np.nan)
        ax.plot(t, wt, ":", linewidth=1.0, label=f"w~{a + 1}{b + 1}")
    for k, w in enumerate(traj.system.modes):
        ax.axhline(w, linestyle="--", color="0.5", linewidth=0.8, label=f"w{k + 1}")
    ax.set_ylim(min(lo, min(traj.system.modes)) - 0.5, max(hi, max(traj.system.modes)) + 0.5)
    paths.append(out_dir / "plot_mu.svg")
    _save(fig, ax, paths[-1])
    return paths
