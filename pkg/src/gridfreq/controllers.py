"""Secondary frequency control laws.

Every law is advanced in lockstep with the plant by a forward-Euler
co-simulation: the integral parts consume measurements taken at the start
of the step, while the proportional inertia terms of the imbalance
allocation laws use the machine frequencies just produced by the plant
update.  With that split the discrete total input of the allocation law
satisfies ``u_s[n+1] - u_s[n] = -k dt (P_s + u_s[n])`` exactly, so the
continuous-time exponential tracking of the power imbalance carries over
to the discrete loop with no overshoot.

Centralized laws dispatch their total input economically on every step;
the decentralized variant tracks each node's own imbalance and performs no
dispatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import dispatch
from .errors import Infeasible, ScenarioError
from .netmodel import AreaPartition, Network, NodeKind, aggregate_constants


# ---------------------------------------------------------------------------
# Law configurations

@dataclass(frozen=True)
class PiacSingle:
    """Centralized imbalance-allocation law with gain k."""
    k: float


@dataclass(frozen=True, eq=False)
class PiacMulti:
    """Per-area imbalance allocation with tie-line export restoration."""
    partition: AreaPartition
    k: float | Mapping[str, float]


@dataclass(frozen=True, eq=False)
class PiacDecentralized:
    """Per-node imbalance allocation against a reference operating point."""
    theta_ref: np.ndarray
    k: float | Mapping[int, float]


@dataclass(frozen=True)
class Agc:
    """Integral law driven by the frequency deviation at one node."""
    k: float
    node: int | None = None     # defaults to the first machine


@dataclass(frozen=True, eq=False)
class GatherBroadcast:
    """Integral law driven by a convex combination of all deviations."""
    k: float
    weights: Mapping[int, float] | None = None   # uniform when omitted


@dataclass(frozen=True, eq=False)
class Dai:
    """Distributed averaging integral law with price consensus."""
    k: float | Mapping[int, float]
    weights: tuple[tuple[int, int, float], ...] | None = None   # ring when omitted


LawConfig = PiacSingle | PiacMulti | PiacDecentralized | Agc | GatherBroadcast | Dai


@dataclass(frozen=True, eq=False)
class ControllerSpec:
    """A control law plus the cost models of the controlled nodes.

    ``costs`` maps node id to a cost model; its keys define the controlled
    set unless ``controlled`` overrides it (the decentralized law needs no
    costs, so it always supplies ``controlled`` explicitly).
    """

    law: LawConfig
    costs: Mapping[int, dispatch.CostModel]
    controlled: tuple[int, ...] | None = None


@dataclass(frozen=True, eq=False)
class ControllerState:
    eta: float | np.ndarray | None
    lam: float | np.ndarray | None
    u: np.ndarray
    u_s: float


@dataclass(frozen=True, eq=False)
class Measurements:
    """What the coordinator sees during one step.

    ``omega`` and ``flows`` are full-length vectors sampled at the start of
    the step (``omega`` is NaN at passive nodes); ``omega_next_m`` holds the
    machine frequencies after the plant update; ``pex`` holds per-area
    exports at the start of the step when a partition is in play.
    """

    omega: np.ndarray
    omega_next_m: np.ndarray
    flows: np.ndarray
    pex: np.ndarray | None = None


def _gain(value, key, what) -> float:
    g = float(value[key]) if isinstance(value, Mapping) else float(value)
    if not g > 0.0:
        raise ScenarioError(f"gain for {what} must be strictly positive")
    return g


class _Base:
    def __init__(self, spec: ControllerSpec, net: Network):
        self.spec = spec
        self.net = net
        ids = spec.controlled if spec.controlled is not None else tuple(spec.costs)
        if not ids:
            raise ScenarioError("controller specification has an empty controlled set")
        for i in ids:
            if i not in net.index_of:
                raise ScenarioError(f"controlled node {i} not in network")
            if net.nodes[net.index_of[i]].kind == NodeKind.PASSIVE:
                raise ScenarioError(f"controlled node {i} is passive")
        # Canonical order within the controlled set.
        self.vk_idx = np.array(sorted(net.index_of[i] for i in ids), int)
        self.vk_ids = tuple(net.node_ids[j] for j in self.vk_idx)
        self._d = net.droop_vec
        self._m = net.inertia_vec
        self._mf = net.mf_idx
        self._machines = net.machine_idx

    def _cost_list(self, ids) -> list[dispatch.CostModel]:
        missing = [i for i in ids if i not in self.spec.costs]
        if missing:
            raise ScenarioError(f"no cost model for controlled nodes {missing}")
        return [self.spec.costs[i] for i in ids]

    def u_full(self, state: ControllerState) -> np.ndarray:
        out = np.zeros(self.net.n)
        out[self.vk_idx] = state.u
        return out

    @property
    def n_controlled(self) -> int:
        return len(self.vk_idx)


def _quadratic_alphas(costs) -> np.ndarray | None:
    if all(isinstance(c, dispatch.Quadratic) for c in costs):
        return np.array([c.alpha for c in costs])
    return None


class PiacSingleController(_Base):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        self.k = _gain(spec.law.k, None, "imbalance allocation")
        self._costs = self._cost_list(self.vk_ids)
        self._alpha = _quadratic_alphas(self._costs)

    def initial_state(self) -> ControllerState:
        return ControllerState(0.0, 0.0, np.zeros(self.n_controlled), 0.0)

    def _dispatch(self, u_s: float) -> tuple[float, np.ndarray]:
        if self.n_controlled == 1:
            return self._costs[0].marginal(u_s), np.array([u_s])
        if self._alpha is not None:
            lam = 2.0 * u_s / self._alpha.sum()
            return lam, self._alpha * lam / 2.0
        res = dispatch.clear(self._costs, u_s)
        return res.lam, res.u

    def step(self, state, meas, dt) -> ControllerState:
        eta = state.eta + dt * float(self._d[self._mf] @ meas.omega[self._mf])
        u_s = -self.k * (eta + float(self._m[self._machines] @ meas.omega_next_m))
        lam, u = self._dispatch(u_s)
        return ControllerState(eta, lam, u, u_s)


class PiacMultiController(_Base):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        part = spec.law.partition
        part.validate(net)
        self.partition = part
        self.area_names = tuple(a.name for a in part.areas)
        self._pex_star = np.array([a.export_nominal for a in part.areas])
        self._k = np.array([_gain(spec.law.k, a.name, f"area {a.name!r}")
                            for a in part.areas])
        self._area_mf = []
        self._area_m_pos = []     # machine canonical indices == machine-block slots
        self._area_vk_pos = []    # positions within the controlled set
        self._area_costs = []
        for a in part.areas:
            # canonical index order keeps summation order identical to the
            # single-area law when the partition has one area
            inside = np.array(sorted(net.index_of[i] for i in a.node_ids), int)
            self._area_mf.append(inside[np.isin(inside, net.mf_idx)])
            self._area_m_pos.append(inside[np.isin(inside, net.machine_idx)])
            vk_here = [p for p, j in enumerate(self.vk_idx) if net.node_ids[j] in a.node_ids]
            if not vk_here:
                raise ScenarioError(f"area {a.name!r} contains no controlled node")
            self._area_vk_pos.append(np.array(vk_here, int))
            self._area_costs.append(
                self._cost_list([self.vk_ids[p] for p in vk_here]))
        self._area_alpha = [_quadratic_alphas(c) for c in self._area_costs]

    def initial_state(self) -> ControllerState:
        z = np.zeros(len(self.partition.areas))
        return ControllerState(z.copy(), z.copy(), np.zeros(self.n_controlled), 0.0)

    def step(self, state, meas, dt) -> ControllerState:
        n_areas = len(self.partition.areas)
        eta = state.eta.copy()
        lam = np.empty(n_areas)
        u = np.empty(self.n_controlled)
        u_s = 0.0
        for r in range(n_areas):
            mf = self._area_mf[r]
            eta[r] += dt * (float(self._d[mf] @ meas.omega[mf])
                            + meas.pex[r] - self._pex_star[r])
            m_pos = self._area_m_pos[r]
            u_r = -self._k[r] * (float(self._m[m_pos] @ meas.omega_next_m[m_pos]) + eta[r])
            pos = self._area_vk_pos[r]
            alpha = self._area_alpha[r]
            if len(pos) == 1:
                lam[r] = self._area_costs[r][0].marginal(u_r)
                u[pos] = u_r
            elif alpha is not None:
                lam[r] = 2.0 * u_r / alpha.sum()
                u[pos] = alpha * lam[r] / 2.0
            else:
                try:
                    res = dispatch.clear(self._area_costs[r], u_r)
                except Infeasible as exc:
                    raise Infeasible(
                        f"area {self.area_names[r]!r}: {exc}") from exc
                lam[r] = res.lam
                u[pos] = res.u
            u_s += u_r
        return ControllerState(eta, lam, u, u_s)


class PiacDecentralizedController(_Base):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        theta_ref = np.asarray(spec.law.theta_ref, float)
        if theta_ref.shape != (net.n,):
            raise ScenarioError("reference angles must cover every node")
        self._flows_ref = net.flow_sums(theta_ref)
        self._k = np.array([_gain(spec.law.k, i, f"node {i}") for i in self.vk_ids])
        # Machine members of the controlled set and their machine-block slots.
        in_machines = np.isin(self.vk_idx, net.machine_idx)
        self._vk_machine_mask = in_machines
        self._vk_machine_pos = self.vk_idx[in_machines]

    def initial_state(self) -> ControllerState:
        z = np.zeros(self.n_controlled)
        return ControllerState(z.copy(), None, z.copy(), 0.0)

    def step(self, state, meas, dt) -> ControllerState:
        vk = self.vk_idx
        eta = state.eta + dt * (self._d[vk] * meas.omega[vk]
                                + meas.flows[vk] - self._flows_ref[vk])
        mterm = np.zeros(self.n_controlled)
        mterm[self._vk_machine_mask] = (self._m[self._vk_machine_pos]
                                        * meas.omega_next_m[self._vk_machine_pos])
        u = -self._k * (mterm + eta)
        return ControllerState(eta, None, u, float(u.sum()))


class _PriceIntegralBase(_Base):
    """Shared machinery for laws that integrate a price and allocate by it."""

    def initial_state(self) -> ControllerState:
        return ControllerState(None, 0.0, np.zeros(self.n_controlled), 0.0)

    def _allocate(self, lam: float) -> np.ndarray:
        if self._alpha is not None:
            return self._alpha * lam / 2.0
        return np.array([c.inverse_marginal(lam) for c in self._costs])


class AgcController(_PriceIntegralBase):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        self.k = _gain(spec.law.k, None, "frequency integral")
        node = spec.law.node
        if node is None:
            node = net.node_ids[0]   # first machine in canonical order
        if node not in net.index_of:
            raise ScenarioError(f"measured node {node} not in network")
        self._meas_idx = net.index_of[node]
        if self._meas_idx not in set(net.mf_idx.tolist()):
            raise ScenarioError(f"measured node {node} has no frequency state")
        self._costs = self._cost_list(self.vk_ids)
        self._alpha = _quadratic_alphas(self._costs)

    def step(self, state, meas, dt) -> ControllerState:
        lam = state.lam - dt * self.k * meas.omega[self._meas_idx]
        u = self._allocate(lam)
        return ControllerState(None, lam, u, float(u.sum()))


class GatherBroadcastController(_PriceIntegralBase):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        self.k = _gain(spec.law.k, None, "gathered frequency integral")
        mf_ids = [net.node_ids[j] for j in net.mf_idx]
        if spec.law.weights is None:
            w = np.full(len(mf_ids), 1.0 / len(mf_ids))
        else:
            weights = dict(spec.law.weights)
            unknown = set(weights) - set(mf_ids)
            if unknown:
                raise ScenarioError(
                    f"weights reference nodes without a frequency state: {sorted(unknown)}")
            w = np.array([weights.get(i, 0.0) for i in mf_ids])
        if np.any(w < 0.0) or np.any(w > 1.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ScenarioError("weights must lie in [0,1] and sum to one")
        self._w = w
        self._costs = self._cost_list(self.vk_ids)
        self._alpha = _quadratic_alphas(self._costs)

    def step(self, state, meas, dt) -> ControllerState:
        avg = float(self._w @ meas.omega[self._mf])
        lam = state.lam - dt * self.k * avg
        u = self._allocate(lam)
        return ControllerState(None, lam, u, float(u.sum()))


class DaiController(_Base):
    def __init__(self, spec, net):
        super().__init__(spec, net)
        self._k = np.array([_gain(spec.law.k, i, f"node {i}") for i in self.vk_ids])
        self._costs = self._cost_list(self.vk_ids)
        self._alpha = _quadratic_alphas(self._costs)
        n_k = self.n_controlled
        edges = spec.law.weights
        if edges is None:
            edges = ring_edges(self.vk_ids)
        w = np.zeros((n_k, n_k))
        pos = {i: p for p, i in enumerate(self.vk_ids)}
        for i, j, wij in edges:
            if i not in pos or j not in pos:
                raise ScenarioError(f"communication edge ({i},{j}) leaves the controlled set")
            if wij < 0.0:
                raise ScenarioError("communication weights must be nonnegative")
            w[pos[i], pos[j]] = wij
            w[pos[j], pos[i]] = wij
        if n_k > 1 and not _connected(w):
            raise ScenarioError("communication graph over the controlled set is not connected")
        self._lap = np.diag(w.sum(axis=1)) - w

    def initial_state(self) -> ControllerState:
        z = np.zeros(self.n_controlled)
        return ControllerState(None, z.copy(), z.copy(), 0.0)

    def step(self, state, meas, dt) -> ControllerState:
        lam = state.lam + dt * self._k * (-meas.omega[self.vk_idx] - self._lap @ state.lam)
        if self._alpha is not None:
            u = self._alpha * lam / 2.0
        else:
            u = np.array([c.inverse_marginal(li) for c, li in zip(self._costs, lam)])
        return ControllerState(None, lam, u, float(u.sum()))


def ring_edges(ids, weight: float = 1.0) -> tuple[tuple[int, int, float], ...]:
    """Undirected ring over ``ids`` in the given order (default weights 1)."""
    ids = list(ids)
    if len(ids) < 2:
        return ()
    if len(ids) == 2:
        return ((ids[0], ids[1], weight),)
    edges = [(ids[p], ids[p + 1], weight) for p in range(len(ids) - 1)]
    edges.append((ids[-1], ids[0], weight))
    return tuple(edges)


def _connected(w: np.ndarray) -> bool:
    n = w.shape[0]
    seen = np.zeros(n, bool)
    stack = [0]
    seen[0] = True
    while stack:
        a = stack.pop()
        for b in np.nonzero(w[a] > 0.0)[0]:
            if not seen[b]:
                seen[b] = True
                stack.append(int(b))
    return bool(seen.all())


_CONTROLLER_TYPES = {
    PiacSingle: PiacSingleController,
    PiacMulti: PiacMultiController,
    PiacDecentralized: PiacDecentralizedController,
    Agc: AgcController,
    GatherBroadcast: GatherBroadcastController,
    Dai: DaiController,
}


def make_controller(spec: ControllerSpec, net: Network):
    try:
        cls = _CONTROLLER_TYPES[type(spec.law)]
    except KeyError:
        raise ScenarioError(f"unknown control law {type(spec.law).__name__}")
    return cls(spec, net)


def abstract_frequency_trace(
    t: np.ndarray,
    u_s: np.ndarray,
    p_s: np.ndarray,
    net: Network,
    omega0: float = 0.0,
) -> np.ndarray:
    """Integrate the aggregate frequency model M_s w' = P_s - D_s w + u_s.

    ``u_s`` and ``p_s`` are piecewise constant over the (uniform) sample
    grid ``t``; the returned trace has the same length.
    """
    m_s, d_s, _ = aggregate_constants(net)
    t = np.asarray(t, float)
    out = np.empty(len(t))
    out[0] = omega0
    w = omega0
    for kk in range(len(t) - 1):
        h = t[kk + 1] - t[kk]
        w = w + h * (p_s[kk] - d_s * w + u_s[kk]) / m_s
        out[kk + 1] = w
    return out
