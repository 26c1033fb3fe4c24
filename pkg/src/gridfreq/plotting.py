"""Figure rendering for simulation reports.

Figures are written to files next to the delimited output; no interactive
backend is required.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .dynamics import Trajectory  # noqa: E402


def overview_figure(traj: Trajectory, title: str | None = None):
    """Multi-panel view of one run: frequencies, inputs, costs, exports."""
    has_areas = traj.pex is not None
    n_rows = 3 if has_areas else 3
    fig, axes = plt.subplots(n_rows, 2, figsize=(10, 9), sharex=True)
    axes = axes.ravel()
    m_cols = [traj.node_ids.index(i) for i in traj.machine_ids]

    ax = axes[0]
    for pos, mid in enumerate(traj.machine_ids):
        ax.plot(traj.t, traj.base_hz * (1.0 + traj.omega[:, m_cols[pos]]),
                lw=0.8, label=str(mid))
    ax.set_ylabel("machine frequency (Hz)")
    if len(traj.machine_ids) <= 10:
        ax.legend(fontsize=6, ncol=2, loc="lower right")

    ax = axes[1]
    ax.plot(traj.t, traj.base_hz * (1.0 + traj.omega_s), color="k", lw=1.0)
    ax.set_ylabel("aggregate frequency (Hz)")

    ax = axes[2]
    for pos in range(len(m_cols)):
        ax.plot(traj.t, traj.omega[:, m_cols[pos]] - traj.omega_s, lw=0.8)
    ax.set_ylabel("relative deviation (p.u.)")

    ax = axes[3]
    ax.plot(traj.t, traj.u_s, color="C0", lw=1.2, label="total input")
    ax.plot(traj.t, -traj.p_s, color="k", ls="--", lw=1.0, label="imbalance")
    ax.set_ylabel("u_s (p.u.)")
    ax.legend(fontsize=7)

    ax = axes[4]
    for pos, i in enumerate(traj.vk_ids):
        ax.plot(traj.t, traj.mc[:, pos], lw=0.8)
    ax.set_ylabel("marginal cost")
    ax.set_xlabel("time (s)")

    ax = axes[5]
    if has_areas:
        for a, name in enumerate(traj.area_names):
            ax.plot(traj.t, traj.pex[:, a] - traj.pex_star[a], lw=1.0, label=name)
        ax.set_ylabel("export deviation (p.u.)")
        ax.legend(fontsize=7)
    else:
        per_node_u = traj.u
        for pos, i in enumerate(traj.vk_ids):
            ax.plot(traj.t, per_node_u[:, pos], lw=0.8)
        ax.set_ylabel("per-controller input (p.u.)")
    ax.set_xlabel("time (s)")

    for ax in axes:
        ax.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return fig


def comparison_figure(trajs: list[Trajectory], labels: list[str]):
    """Overlay of total inputs and worst machine frequencies across runs."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 7), sharex=True)
    for traj, label in zip(trajs, labels):
        ax1.plot(traj.t, traj.u_s, lw=1.1, label=label)
    if trajs:
        ax1.plot(trajs[0].t, -trajs[0].p_s, color="k", ls="--", lw=0.9,
                 label="imbalance")
    ax1.set_ylabel("u_s (p.u.)")
    ax1.legend(fontsize=8)

    for traj, label in zip(trajs, labels):
        m_cols = [traj.node_ids.index(i) for i in traj.machine_ids]
        worst = traj.base_hz * (1.0 + traj.omega[:, m_cols].min(axis=1))
        ax2.plot(traj.t, worst, lw=1.1, label=label)
    ax2.set_ylabel("lowest machine frequency (Hz)")
    ax2.set_xlabel("time (s)")
    ax2.legend(fontsize=8)

    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return fig


def save_figure(fig, path, dpi: int = 150) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path
