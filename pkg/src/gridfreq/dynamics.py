"""Closed-loop integration of the swing-equation network.

The plant advances by forward Euler: machine angles and frequencies and
frequency-dependent angles are explicit states, frequency-dependent node
frequencies come from their droop balance, and passive-node angles are
re-solved by Newton each step (warm-started).  The controller is advanced
after the plant from measurements taken at the start of the step (its
inertia term sees the freshly updated machine frequencies; see
:mod:`gridfreq.controllers`).

Step disturbances change node injections at the first step boundary at or
after their scheduled time.  A simulation starts from the flow equilibrium
of the pre-disturbance case, which must be balanced.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import controllers, dispatch, powerflow
from .controllers import ControllerSpec, ControllerState, Measurements, PiacMulti, PiacSingle
from .errors import AlgebraicDivergence, CaseValidationError, NonConvergence, SingularJacobian
from .netmodel import AreaPartition, Network, aggregate_constants, export_flow


@dataclass(frozen=True)
class Disturbance:
    """Step change of injections: node id -> delta P (p.u.) at time t."""

    time: float
    delta_p: dict[int, float]

    def __post_init__(self):
        if self.time < 0.0:
            raise CaseValidationError("disturbance time must be nonnegative")


@dataclass(eq=False)
class SimState:
    theta: np.ndarray        # all nodes
    omega: np.ndarray        # NaN at passive nodes
    t: float
    controller: ControllerState


@dataclass(eq=False)
class Trajectory:
    """Sampled closed-loop records in canonical node order."""

    t: np.ndarray
    theta: np.ndarray        # (samples, n)
    omega: np.ndarray        # (samples, n), NaN at passive nodes
    u: np.ndarray            # (samples, n_controlled)
    u_s: np.ndarray
    lam: np.ndarray          # NaN when the law has no scalar price
    eta: np.ndarray          # NaN when the law has no scalar integral state
    mc: np.ndarray           # per-controller marginal costs, NaN without costs
    omega_s: np.ndarray      # aggregate frequency model driven by u_s
    p_s: np.ndarray          # total injection in effect at each sample
    pex: np.ndarray | None   # (samples, areas) exports, None without partition
    node_ids: tuple[int, ...]
    machine_ids: tuple[int, ...]
    mf_ids: tuple[int, ...]
    vk_ids: tuple[int, ...]
    area_names: tuple[str, ...] = ()
    pex_star: np.ndarray | None = None
    dt: float = 1e-3
    stride: int = 1
    base_hz: float = 60.0

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def frequency_hz(self) -> np.ndarray:
        """Per-node frequencies over machine and freq nodes, in Hz."""
        cols = [self.node_ids.index(i) for i in self.mf_ids]
        return self.base_hz * (1.0 + self.omega[:, cols])


def derivatives(net: Network, theta: np.ndarray, omega_m: np.ndarray,
                u_full: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-hand sides at a state: angle rates, machine frequency rates.

    Returns ``(theta_dot, omega_dot_m, omega_f)`` where ``theta_dot`` covers
    machine and frequency-dependent nodes (NaN at passive nodes, whose
    angles are algebraic), ``omega_dot_m`` covers machines, and ``omega_f``
    is the droop-balance frequency of the frequency-dependent nodes.
    """
    flows = net.flow_sums(theta)
    p = net.injection_vec
    m_idx, f_idx = net.machine_idx, net.freq_idx
    omega_f = ((p[f_idx] - flows[f_idx] + u_full[f_idx]) / net.droop_vec[f_idx]
               if len(f_idx) else np.empty(0))
    omega_dot_m = (p[m_idx] - net.droop_vec[m_idx] * omega_m
                   - flows[m_idx] + u_full[m_idx]) / net.inertia_vec[m_idx]
    theta_dot = np.full(net.n, np.nan)
    theta_dot[m_idx] = omega_m
    theta_dot[f_idx] = omega_f
    return theta_dot, omega_dot_m, omega_f


def _freq_node_omega(net, theta, u_full, p=None):
    f_idx = net.freq_idx
    if not len(f_idx):
        return np.empty(0)
    flows = net.flow_sums(theta)
    p = net.injection_vec if p is None else p
    return (p[f_idx] - flows[f_idx] + u_full[f_idx]) / net.droop_vec[f_idx]


def step(state: SimState, net: Network, ctrl, dt: float,
         part: AreaPartition | None = None) -> SimState:
    """One forward-Euler plant step followed by the controller update."""
    n = net.n
    m_idx, f_idx, p_idx = net.machine_idx, net.freq_idx, net.passive_idx
    u_full = ctrl.u_full(state.controller)
    flows = net.flow_sums(state.theta)
    p = net.injection_vec

    omega = state.omega.copy()
    omega_m = omega[m_idx]
    if len(f_idx):
        omega[f_idx] = (p[f_idx] - flows[f_idx] + u_full[f_idx]) / net.droop_vec[f_idx]

    theta_new = state.theta.copy()
    theta_new[m_idx] += dt * omega_m
    if len(f_idx):
        theta_new[f_idx] += dt * omega[f_idx]
    omega_m_new = omega_m + dt * (p[m_idx] - net.droop_vec[m_idx] * omega_m
                                  - flows[m_idx] + u_full[m_idx]) / net.inertia_vec[m_idx]

    if len(p_idx):
        try:
            sol = powerflow.solve_algebraic(net, theta_new, unknown=p_idx)
        except (NonConvergence, SingularJacobian) as exc:
            raise AlgebraicDivergence(
                f"passive-node solve failed at t={state.t + dt:.6f}: {exc}",
                t=state.t + dt) from exc
        theta_new = sol.theta

    pex = export_flow(net, part, state.theta) if part is not None else None
    meas = Measurements(omega=omega, omega_next_m=omega_m_new, flows=flows, pex=pex)
    cstate = ctrl.step(state.controller, meas, dt)

    omega_new = np.full(n, np.nan)
    omega_new[m_idx] = omega_m_new
    if len(f_idx):
        omega_new[f_idx] = _freq_node_omega(net, theta_new, ctrl.u_full(cstate))
    return SimState(theta_new, omega_new, state.t + dt, cstate)


def apply_disturbance(net: Network, dist: Disturbance) -> Network:
    p = net.injection_vec.copy()
    for i, dp in dist.delta_p.items():
        if i not in net.index_of:
            raise CaseValidationError(f"disturbance references unknown node {i}")
        p[net.index_of[i]] += dp
    return net.with_injections(p)


def _law_partition(spec: ControllerSpec) -> AreaPartition | None:
    return spec.law.partition if isinstance(spec.law, PiacMulti) else None


def simulate(
    net: Network,
    spec: ControllerSpec,
    disturbances: Sequence[Disturbance] = (),
    t_max: float = 60.0,
    dt: float = 1e-3,
    stride: int = 10,
    part: AreaPartition | None = None,
) -> Trajectory:
    """Run the closed loop from the pre-disturbance equilibrium.

    ``part`` adds per-area export records for any law; the multi-area law
    always records (and measures) over its own partition, which must agree
    with ``part`` when both are given.
    """
    if dt <= 0.0 or t_max <= 0.0 or stride < 1:
        raise ValueError("dt and t_max must be positive, stride at least 1")
    p_s0 = float(net.injection_vec.sum())
    if abs(p_s0) > 1e-9:
        raise CaseValidationError(
            f"pre-disturbance case is unbalanced (sum P = {p_s0:.3e}); "
            "secondary control scenarios start from a balanced operating point")

    ctrl = controllers.make_controller(spec, net)
    law_part = _law_partition(spec)
    if law_part is not None:
        if part is not None and part != law_part:
            raise CaseValidationError(
                "recording partition differs from the controller's partition")
        part = law_part
    if part is not None:
        part.validate(net)
    base = powerflow.solve_algebraic(net)
    theta = base.theta
    n = net.n
    m_idx, f_idx = net.machine_idx, net.freq_idx

    omega = np.full(n, np.nan)
    omega[m_idx] = 0.0
    cstate = ctrl.initial_state()
    u_full = ctrl.u_full(cstate)
    if len(f_idx):
        omega[f_idx] = _freq_node_omega(net, theta, u_full)
    state = SimState(theta, omega, 0.0, cstate)

    pending = sorted(disturbances, key=lambda d: d.time)
    n_steps = int(round(t_max / dt))
    n_samples = n_steps // stride + 1
    n_k = ctrl.n_controlled
    n_areas = len(part.areas) if part is not None else 0

    rec_t = np.empty(n_samples)
    rec_theta = np.empty((n_samples, n))
    rec_omega = np.empty((n_samples, n))
    rec_u = np.empty((n_samples, n_k))
    rec_us = np.empty(n_samples)
    rec_lam = np.empty(n_samples)
    rec_eta = np.empty(n_samples)
    rec_mc = np.empty((n_samples, n_k))
    rec_ps = np.empty(n_samples)
    rec_ws = np.empty(n_samples)
    rec_pex = np.empty((n_samples, n_areas)) if part is not None else None

    costs = [spec.costs.get(i) for i in ctrl.vk_ids]
    m_s, d_s, _ = aggregate_constants(net)
    omega_s = 0.0
    sample = 0

    def record(k_sample, cur_net):
        rec_t[k_sample] = state.t
        rec_theta[k_sample] = state.theta
        rec_omega[k_sample] = state.omega
        rec_u[k_sample] = state.controller.u
        rec_us[k_sample] = state.controller.u_s
        lam = state.controller.lam
        rec_lam[k_sample] = lam if isinstance(lam, float) else np.nan
        eta = state.controller.eta
        rec_eta[k_sample] = eta if isinstance(eta, float) else np.nan
        for c_pos, c in enumerate(costs):
            rec_mc[k_sample, c_pos] = (c.marginal(state.controller.u[c_pos])
                                       if c is not None else np.nan)
        rec_ps[k_sample] = cur_net.injection_vec.sum()
        rec_ws[k_sample] = omega_s
        if rec_pex is not None:
            rec_pex[k_sample] = export_flow(cur_net, part, state.theta)

    cur = net
    for k_step in range(n_steps + 1):
        while pending and state.t >= pending[0].time - 1e-12:
            cur = apply_disturbance(cur, pending.pop(0))
            # Frequency-dependent nodes react instantly to the new injections.
            if len(f_idx):
                state.omega[f_idx] = _freq_node_omega(cur, state.theta,
                                                      ctrl.u_full(state.controller))
        if k_step % stride == 0:
            record(sample, cur)
            sample += 1
        if k_step == n_steps:
            break
        u_s_now = state.controller.u_s
        p_s_now = float(cur.injection_vec.sum())
        state = step(state, cur, ctrl, dt, law_part)
        state.t = (k_step + 1) * dt   # keep sample times free of additive drift
        omega_s = omega_s + dt * (p_s_now - d_s * omega_s + u_s_now) / m_s

    area_names = tuple(a.name for a in part.areas) if part is not None else ()
    pex_star = (np.array([a.export_nominal for a in part.areas])
                if part is not None else None)
    return Trajectory(
        t=rec_t, theta=rec_theta, omega=rec_omega, u=rec_u, u_s=rec_us,
        lam=rec_lam, eta=rec_eta, mc=rec_mc, omega_s=rec_ws, p_s=rec_ps,
        pex=rec_pex, node_ids=net.node_ids,
        machine_ids=tuple(net.node_ids[j] for j in m_idx),
        mf_ids=tuple(net.node_ids[j] for j in net.mf_idx),
        vk_ids=ctrl.vk_ids, area_names=area_names, pex_star=pex_star,
        dt=dt, stride=stride, base_hz=net.base_hz,
    )


def to_phi_coordinates(theta: np.ndarray, ref: int = 0) -> np.ndarray:
    """Angles relative to the reference node (the first machine)."""
    return theta - theta[ref]


# ---------------------------------------------------------------------------
# Reference integrator (oracle only; the Euler co-simulation is the default)


def reference_rk4(
    net: Network,
    spec: ControllerSpec | None,
    disturbances: Sequence[Disturbance] = (),
    t_max: float = 1.0,
    dt: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the continuous-time closed loop with classical RK4.

    Supports networks without passive nodes and either no secondary control
    or the single-area allocation law, whose continuous dynamics are an ODE
    in (theta, omega_machines, eta).  Returns (theta, omega_machines) at
    ``t_max``.  Disturbance times must fall on the step grid.
    """
    if net.n_passive:
        raise ValueError("reference integrator requires a network without passive nodes")
    if spec is not None and not isinstance(spec.law, PiacSingle):
        raise ValueError("reference integrator supports only the single-area allocation law")

    m_idx, f_idx = net.machine_idx, net.freq_idx
    m_vec = net.inertia_vec[m_idx]
    d_m = net.droop_vec[m_idx]
    d_f = net.droop_vec[f_idx]

    if spec is not None:
        ctrl = controllers.make_controller(spec, net)
        vk = ctrl.vk_idx
        k = spec.law.k
        models = [spec.costs[i] for i in ctrl.vk_ids]
    else:
        vk = np.empty(0, int)

    def u_of(u_s):
        u_full = np.zeros(net.n)
        if spec is not None and len(vk):
            res = dispatch.clear(models, u_s)
            u_full[vk] = res.u
        return u_full

    def rhs(y, p):
        theta = y[:net.n]
        omega_m = y[net.n:net.n + len(m_idx)]
        eta = y[-1]
        flows = net.flow_sums(theta)
        if spec is not None:
            u_s = -k * (eta + float(m_vec @ omega_m))
            u_full = u_of(u_s)
        else:
            u_full = np.zeros(net.n)
        omega_f = ((p[f_idx] - flows[f_idx] + u_full[f_idx]) / d_f
                   if len(f_idx) else np.empty(0))
        dtheta = np.zeros(net.n)
        dtheta[m_idx] = omega_m
        dtheta[f_idx] = omega_f
        domega_m = (p[m_idx] - d_m * omega_m - flows[m_idx] + u_full[m_idx]) / m_vec
        deta = float(d_m @ omega_m) + (float(d_f @ omega_f) if len(f_idx) else 0.0)
        return np.concatenate([dtheta, domega_m, [deta]])

    base = powerflow.solve_algebraic(net)
    y = np.concatenate([base.theta, np.zeros(len(m_idx)), [0.0]])
    pending = sorted(disturbances, key=lambda d: d.time)
    cur = net
    p = cur.injection_vec
    n_steps = int(round(t_max / dt))
    t = 0.0
    for _ in range(n_steps):
        while pending and t >= pending[0].time - 1e-12:
            cur = apply_disturbance(cur, pending.pop(0))
            p = cur.injection_vec
        k1 = rhs(y, p)
        k2 = rhs(y + 0.5 * dt * k1, p)
        k3 = rhs(y + 0.5 * dt * k2, p)
        k4 = rhs(y + dt * k3, p)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return y[:net.n], y[net.n:net.n + len(m_idx)]
