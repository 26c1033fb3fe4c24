"""Energy diagnostics and scalar performance metrics.

The energy function combines the network potential, machine kinetic
energy, and quadratic penalties on the price and integral-state offsets
from the post-disturbance equilibrium.  Along a closed-loop trajectory of
the single-area allocation law it is non-increasing in continuous time
once the mixing weight alpha exceeds 1/(k * min droop over the controlled
set); the descent check differences the sampled values and reports any
rises above a dt-dependent tolerance instead of asserting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import powerflow
from .controllers import ControllerSpec, PiacSingle
from .dynamics import Trajectory, to_phi_coordinates
from .errors import ScenarioError
from .netmodel import Network

SETTLE_TOL = 1e-4          # p.u. frequency deviation
OVERSHOOT_TOL = 1e-3       # p.u. power, threshold for flagging overshoot


def potential_energy(net: Network, phi: np.ndarray) -> float:
    """Network potential sum_ij b_ij (1 - cos(phi_i - phi_j)); zero at phi=0."""
    li, lj, lb = net._edge_arrays
    return float(np.sum(lb * (1.0 - np.cos(phi[li] - phi[lj]))))


def potential_gradient(net: Network, phi: np.ndarray) -> np.ndarray:
    """Gradient of the potential: the per-node flow sums."""
    return net.flow_sums(phi)


@dataclass(frozen=True, eq=False)
class LyapunovConfig:
    net: Network
    costs: list
    k: float
    alpha: float
    phi_star: np.ndarray
    eta_star: float
    lam_star: float
    u_star: np.ndarray
    alpha_bound: float

    @property
    def alpha_ok(self) -> bool:
        return self.alpha > self.alpha_bound


def make_lyapunov_config(net: Network, spec: ControllerSpec,
                         alpha: float | None = None) -> LyapunovConfig:
    """Build the energy-function configuration at the closed-loop equilibrium.

    ``net`` must carry the post-disturbance injections.  ``alpha`` defaults
    to twice its admissibility bound 1/(k * min droop over controlled nodes).
    """
    if not isinstance(spec.law, PiacSingle):
        raise ScenarioError("energy diagnostics apply to the single-area allocation law")
    k = spec.law.k
    ids = sorted(spec.costs, key=lambda i: net.index_of[i])
    costs = [spec.costs[i] for i in ids]
    d_min = min(net.droop_vec[net.index_of[i]] for i in ids)
    bound = 1.0 / (k * d_min)
    if alpha is None:
        alpha = 2.0 * bound
    eq = powerflow.find_equilibrium(net, spec.costs, k=k)
    return LyapunovConfig(
        net=net, costs=costs, k=k, alpha=float(alpha),
        phi_star=to_phi_coordinates(eq.theta),
        eta_star=float(eq.eta), lam_star=float(eq.lam), u_star=eq.u,
        alpha_bound=bound,
    )


def lyapunov_value(cfg: LyapunovConfig, phi: np.ndarray, omega_m: np.ndarray,
                   eta: float, lam: float) -> tuple[float, float, float, float]:
    """Energy value and its three components at one state (phi coordinates)."""
    net = cfg.net
    m_idx = net.machine_idx
    m_vec = net.inertia_vec[m_idx]
    grad_star = potential_gradient(net, cfg.phi_star)
    v1 = (potential_energy(net, phi) - potential_energy(net, cfg.phi_star)
          - float(grad_star @ (phi - cfg.phi_star))
          + 0.5 * float(omega_m @ (m_vec * omega_m)))
    total = sum(c.inverse_marginal(lam) for c in cfg.costs)
    total_star = sum(c.inverse_marginal(cfg.lam_star) for c in cfg.costs)
    v2 = 0.5 * (total - total_star) ** 2
    v3 = 0.5 * cfg.k ** 2 * (float(m_vec @ omega_m) + eta - cfg.eta_star) ** 2
    return v1 + cfg.alpha * v2 + v3, v1, v2, v3


@dataclass(frozen=True)
class DescentReport:
    max_rise_rate: float            # largest positive dV/dt observed
    fraction_descending: float
    violations: tuple[tuple[float, float], ...]   # (t, dV/dt) above tolerance
    tolerance: float
    alpha: float
    alpha_bound: float
    alpha_ok: bool
    t_start: float


def check_lyapunov_descent(cfg: LyapunovConfig, traj: Trajectory,
                           t_start: float | None = None,
                           tolerance: float | None = None) -> DescentReport:
    """Difference the energy along a trajectory and report any rises.

    The check covers the autonomous tail of the trajectory: by default it
    starts at the last change of the total injection (the equilibrium in
    ``cfg`` is the one the post-disturbance system converges to).
    """
    if tolerance is None:
        tolerance = 1e-6 + 10.0 * traj.dt
    if t_start is None:
        changes = np.nonzero(np.abs(np.diff(traj.p_s)) > 0.0)[0]
        t_start = float(traj.t[changes[-1] + 1]) if len(changes) else float(traj.t[0])
    sel = np.nonzero(traj.t >= t_start - 1e-12)[0]
    if len(sel) < 2:
        raise ScenarioError("trajectory has fewer than two samples past t_start")
    if not cfg.alpha_ok:
        print(f"warning: alpha={cfg.alpha:.6g} is not above its bound "
              f"{cfg.alpha_bound:.6g}; descent is not guaranteed")

    m_cols = [traj.node_ids.index(i) for i in traj.machine_ids]
    values = np.empty(len(sel))
    for pos, s in enumerate(sel):
        phi = to_phi_coordinates(traj.theta[s])
        values[pos], _, _, _ = lyapunov_value(
            cfg, phi, traj.omega[s, m_cols], float(traj.eta[s]), float(traj.lam[s]))
    rates = np.diff(values) / np.diff(traj.t[sel])
    violations = tuple(
        (float(traj.t[sel[pos + 1]]), float(r))
        for pos, r in enumerate(rates) if r > tolerance)
    return DescentReport(
        max_rise_rate=float(max(rates.max(), 0.0)) if len(rates) else 0.0,
        fraction_descending=float(np.mean(rates <= 0.0)) if len(rates) else 1.0,
        violations=violations,
        tolerance=float(tolerance),
        alpha=cfg.alpha,
        alpha_bound=cfg.alpha_bound,
        alpha_ok=cfg.alpha_ok,
        t_start=float(t_start),
    )


@dataclass(frozen=True)
class Metrics:
    nadir_hz: float                    # min machine frequency over the run
    max_overshoot_us: float            # max |u_s| excess over its final value
    settling_time_s: float | None      # first time max |omega| stays below tol
    marginal_spread: float             # max spread of marginal costs (NaN without costs)
    export_deviation: dict[str, float] | None   # per-area, after settling

    def to_dict(self) -> dict:
        return {
            "nadir_hz": self.nadir_hz,
            "max_overshoot_us": self.max_overshoot_us,
            "settling_time_s": self.settling_time_s,
            "marginal_spread": None if math.isnan(self.marginal_spread)
            else self.marginal_spread,
            "export_deviation": self.export_deviation,
        }


def compute_metrics(traj: Trajectory, settle_tol: float = SETTLE_TOL) -> Metrics:
    """Scalar summary of a trajectory.

    The nadir is taken over machine nodes (frequency-dependent nodes have
    algebraic frequencies that jump at step disturbances).  Settling is the
    first sample after which every machine/freq deviation stays below
    ``settle_tol``; export deviations are measured from then on.
    """
    if traj.n_samples == 0:
        raise ValueError("empty trajectory")
    m_cols = [traj.node_ids.index(i) for i in traj.machine_ids]
    mf_cols = [traj.node_ids.index(i) for i in traj.mf_ids]
    nadir = traj.base_hz * (1.0 + float(traj.omega[:, m_cols].min()))

    final_us = abs(float(traj.u_s[-1]))
    overshoot = max(0.0, float(np.abs(traj.u_s).max()) - final_us)

    dev = np.abs(traj.omega[:, mf_cols]).max(axis=1)
    above = np.nonzero(dev >= settle_tol)[0]
    if len(above) == 0:
        settling = 0.0
    elif above[-1] == traj.n_samples - 1:
        settling = None
    else:
        settling = float(traj.t[above[-1] + 1])

    if np.all(np.isnan(traj.mc)):
        spread = float("nan")
    else:
        spread = float((traj.mc.max(axis=1) - traj.mc.min(axis=1)).max())

    export_dev = None
    if traj.pex is not None and traj.pex_star is not None:
        export_dev = {}
        for a, name in enumerate(traj.area_names):
            if settling is None:
                export_dev[name] = None
            else:
                tail = traj.t >= settling
                export_dev[name] = float(
                    np.abs(traj.pex[tail, a] - traj.pex_star[a]).max())

    return Metrics(nadir_hz=nadir, max_overshoot_us=overshoot,
                   settling_time_s=settling, marginal_spread=spread,
                   export_deviation=export_dev)
