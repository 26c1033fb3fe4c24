"""Delimited trajectory output and machine-readable run summaries.

The trajectory CSV has a fixed header and column order: time, per-node
frequencies in Hz over machine and frequency-dependent nodes, the total
control input, the price, per-controller inputs, per-controller marginal
costs, the aggregate-model frequency deviation, and per-area exports when
a partition is in play.  Floats are written with ``repr`` so reruns with
identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .analysis import OVERSHOOT_TOL, Metrics
from .dynamics import Trajectory


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def trajectory_header(traj: Trajectory, rel_freq: bool = False) -> list[str]:
    cols = ["t"]
    cols += [f"freq_{i}" for i in traj.mf_ids]
    cols += ["u_s", "lambda"]
    cols += [f"u_{i}" for i in traj.vk_ids]
    cols += [f"mc_{i}" for i in traj.vk_ids]
    cols += ["omega_s"]
    cols += [f"pex_{name}" for name in traj.area_names]
    if rel_freq:
        cols += [f"relfreq_{i}" for i in traj.machine_ids]
    return cols


def write_trajectory_csv(traj: Trajectory, path, rel_freq: bool = False) -> Path:
    path = Path(path)
    mf_cols = [traj.node_ids.index(i) for i in traj.mf_ids]
    m_cols = [traj.node_ids.index(i) for i in traj.machine_ids]
    freq = traj.base_hz * (1.0 + traj.omega[:, mf_cols])
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(trajectory_header(traj, rel_freq)) + "\n")
        for s in range(traj.n_samples):
            row = [_fmt(traj.t[s])]
            row += [_fmt(v) for v in freq[s]]
            row += [_fmt(traj.u_s[s]), _fmt(traj.lam[s])]
            row += [_fmt(v) for v in traj.u[s]]
            row += [_fmt(v) for v in traj.mc[s]]
            row.append(_fmt(traj.omega_s[s]))
            if traj.pex is not None:
                row += [_fmt(v) for v in traj.pex[s]]
            if rel_freq:
                row += [_fmt(traj.omega[s, c] - traj.omega_s[s]) for c in m_cols]
            fh.write(",".join(row) + "\n")
    return path


def summary_payload(name: str, scenario_info: dict, traj: Trajectory,
                    metrics: Metrics, artifacts: dict) -> dict:
    mf_cols = [traj.node_ids.index(i) for i in traj.mf_ids]
    final_omega = float(np.abs(traj.omega[-1, mf_cols]).max())
    return {
        "scenario": name,
        **scenario_info,
        "metrics": metrics.to_dict(),
        "overshoot_flagged": bool(metrics.max_overshoot_us > OVERSHOOT_TOL),
        "final": {
            "t": float(traj.t[-1]),
            "max_abs_omega": final_omega,
            "u_s": float(traj.u_s[-1]),
            "sum_u": float(traj.u[-1].sum()),
        },
        "artifacts": artifacts,
    }


def write_summary_json(payload: dict, path) -> Path:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path


def write_rows_csv(path, header: list[str], rows: list[list]) -> Path:
    """Small helper for comparison and sweep tables."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    return path
