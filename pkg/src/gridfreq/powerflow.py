"""Algebraic power flow, equilibria, and security-region checks.

Flow equations are the lossless sine form: node i balances when
``P_i + u_i = sum_j b_ij sin(theta_i - theta_j)``.  The solver is a damped
Newton iteration on a chosen subset of unknown angles; the reference angle
is the first machine node (canonical index 0), pinned to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dispatch
from .errors import Infeasible, NonConvergence, SingularJacobian
from .netmodel import Network

# Lines whose angle spread is within this margin of pi/2 are flagged
# rather than rejected; the security region is open.
BOUNDARY_MARGIN = 1e-6


@dataclass(frozen=True)
class FlowSolution:
    theta: np.ndarray
    residual_norm: float
    iterations: int
    secure: bool
    near_boundary: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Equilibrium:
    theta: np.ndarray
    lam: float
    eta: float | None
    u: np.ndarray          # full-length vector, zero off the controller set
    secure: bool


def synchronized_frequency(net: Network, u: np.ndarray | None = None) -> float:
    """Common steady-state frequency deviation (P_s + sum u) / D_s."""
    d_s = net.droop_vec.sum()
    total = net.injection_vec.sum()
    if u is not None:
        total += np.asarray(u).sum()
    return float(total / d_s)


def security_check(net: Network, theta: np.ndarray) -> tuple[bool, list[tuple[int, int]]]:
    """Strict |theta_i - theta_j| < pi/2 on every line."""
    violations = []
    for ln in net.lines:
        d = theta[net.index_of[ln.i]] - theta[net.index_of[ln.j]]
        if not abs(d) < math.pi / 2:
            violations.append((ln.i, ln.j))
    return not violations, violations


def _near_boundary(net: Network, theta: np.ndarray) -> tuple[tuple[int, int], ...]:
    flagged = []
    for ln in net.lines:
        d = abs(theta[net.index_of[ln.i]] - theta[net.index_of[ln.j]])
        if math.pi / 2 - BOUNDARY_MARGIN <= d < math.pi / 2:
            flagged.append((ln.i, ln.j))
    return tuple(flagged)


def laplacian(net: Network, phi: np.ndarray) -> np.ndarray:
    """Hessian of the network potential with the reference node removed.

    Entry (a,b) is -b_ab cos(phi_a - phi_b) off the diagonal and
    sum_j b_aj cos(phi_a - phi_j) on it; rows/columns for the reference
    node (canonical index 0) are dropped, giving an (n-1) x (n-1) matrix
    that is positive definite anywhere inside the security region.
    """
    diffs = phi[:, None] - phi[None, :]
    c = net.b_matrix * np.cos(diffs)
    lap = np.diag(c.sum(axis=1)) - c
    return lap[1:, 1:]


def solve_algebraic(
    net: Network,
    theta0: np.ndarray | None = None,
    unknown: np.ndarray | None = None,
    injections: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> FlowSolution:
    """Damped Newton solve of the flow equations at ``unknown`` nodes.

    ``theta0`` supplies fixed angles for known nodes and the initial guess
    for unknown ones (flat start when omitted).  ``unknown`` defaults to
    every node except the reference.  Residuals are measured in max-abs.
    """
    n = net.n
    theta = np.zeros(n) if theta0 is None else np.array(theta0, float, copy=True)
    if unknown is None:
        unknown = np.arange(1, n)
    else:
        unknown = np.asarray(unknown, int)
    if unknown.size == 0:
        raise ValueError("unknown set must be nonempty")
    p = net.injection_vec if injections is None else np.asarray(injections, float)

    def residual(th):
        return p[unknown] - net.flow_sums(th)[unknown]

    r = residual(theta)
    rn = float(np.abs(r).max())
    iterations = 0
    while rn > tol:
        if iterations >= max_iter:
            raise NonConvergence(
                f"power flow did not converge in {max_iter} iterations "
                f"(residual {rn:.3e})")
        iterations += 1
        diffs = theta[:, None] - theta[None, :]
        c = net.b_matrix * np.cos(diffs)
        jac = c[np.ix_(unknown, unknown)].copy()
        jac[np.diag_indices_from(jac)] = -c[unknown, :].sum(axis=1)
        try:
            delta = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(
                f"singular Newton Jacobian at iteration {iterations}") from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian(
                f"non-finite Newton step at iteration {iterations}")
        # Step halving when the residual fails to decrease.
        scale = 1.0
        accepted = False
        for _ in range(9):
            trial = theta.copy()
            trial[unknown] += scale * delta
            r_trial = residual(trial)
            rn_trial = float(np.abs(r_trial).max())
            if rn_trial < rn or rn_trial <= tol:
                theta, r, rn = trial, r_trial, rn_trial
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            raise NonConvergence(
                f"power flow stalled at residual {rn:.3e} after {iterations} iterations")

    secure, _ = security_check(net, theta)
    return FlowSolution(theta, rn, iterations, secure, _near_boundary(net, theta))


def find_equilibrium(net: Network, costs, k: float | None = None) -> Equilibrium:
    """Closed-loop equilibrium: price, inputs, integral state, and angles.

    ``costs`` maps node id to a cost model for every controlled node.  At
    the equilibrium the price clears the total imbalance, every frequency
    deviation is zero, and the angles solve the flow equations with the
    dispatched inputs added to the injections.  ``eta`` is the steady
    integral state ``P_s / k`` when a gain is supplied, else None.
    """
    p_s = float(net.injection_vec.sum())
    u_full = np.zeros(net.n)
    if costs:
        ids = [nd.id for nd in net.nodes if nd.id in costs]
        models = [costs[i] for i in ids]
        res = dispatch.clear(models, -p_s)
        lam = res.lam
        for i, ui in zip(ids, res.u):
            u_full[net.index_of[i]] = ui
    else:
        if abs(p_s) > 1e-9:
            raise Infeasible(
                "network has a nonzero power imbalance and no controllers")
        lam = 0.0
    eta = None if k is None else p_s / k
    sol = solve_algebraic(net, injections=net.injection_vec + u_full)
    return Equilibrium(sol.theta, float(lam), eta, u_full, sol.secure)
