import math

import numpy as np
import pytest

from gridfreq.dispatch import Quadratic
from gridfreq.errors import NonConvergence, SingularJacobian
from gridfreq.netmodel import Line, Network, Node, NodeKind
from gridfreq.powerflow import (
    find_equilibrium,
    laplacian,
    security_check,
    solve_algebraic,
    synchronized_frequency,
)


def _pair(p1, p2, b=1.0, d=(1.0, 1.0)):
    return Network(
        nodes=(
            Node(1, NodeKind.MACHINE, inertia=1.0, droop=d[0], power=p1,
                 has_controller=True, alpha=1.0),
            Node(2, NodeKind.FREQ, droop=d[1], power=p2),
        ),
        lines=(Line(1, 2, b),),
    )


def test_sync_frequency_balanced(two_node):
    assert synchronized_frequency(two_node) == 0.0


def test_sync_frequency_hand_value():
    net = _pair(1.0, -0.5)
    assert synchronized_frequency(net) == pytest.approx(0.25)


def test_sync_frequency_with_inputs(two_node):
    u = np.array([0.3, 0.0])
    assert synchronized_frequency(two_node, u) == pytest.approx(0.15)


def test_solve_two_node_closed_form():
    net = _pair(0.5, -0.5, b=1.0)
    sol = solve_algebraic(net)
    assert sol.theta[0] == 0.0
    assert sol.theta[1] == pytest.approx(-math.asin(0.5), abs=1e-10)
    assert sol.residual_norm <= 1e-10
    assert sol.secure


def test_solve_zero_injections(two_node):
    net = two_node.with_injections(np.zeros(2))
    sol = solve_algebraic(net)
    assert np.allclose(sol.theta, 0.0)
    assert sol.iterations == 0


def test_solve_infeasible():
    net = _pair(1.5, -1.5, b=1.0)
    with pytest.raises((NonConvergence, SingularJacobian)):
        solve_algebraic(net)


def test_solve_requires_unknowns(two_node):
    with pytest.raises(ValueError):
        solve_algebraic(two_node, unknown=np.array([], dtype=int))


def test_warm_start_converges_faster(ieee39):
    cold = solve_algebraic(ieee39)
    warm = solve_algebraic(ieee39, theta0=cold.theta)
    assert warm.iterations <= 1
    assert np.allclose(warm.theta, cold.theta, atol=1e-9)


def test_security_check_trivial(two_node):
    ok, bad = security_check(two_node, np.zeros(2))
    assert ok and bad == []


def test_security_check_violation(two_node):
    ok, bad = security_check(two_node, np.array([0.0, -1.6]))
    assert not ok
    assert bad == [(1, 2)]


def test_ieee39_base_case_secure(ieee39):
    sol = solve_algebraic(ieee39)
    ok, bad = security_check(ieee39, sol.theta)
    assert ok, f"violating lines: {bad}"
    assert sol.near_boundary == ()


def test_laplacian_two_node(two_node):
    lap = laplacian(two_node, np.zeros(2))
    assert lap.shape == (1, 1)
    assert lap[0, 0] == pytest.approx(5.0)


def test_laplacian_triangle_flat(triangle):
    b = 2.0
    lap = laplacian(triangle, np.zeros(3))
    assert np.allclose(lap, [[2 * b, -b], [-b, 2 * b]])


def test_laplacian_positive_definite_in_region(triangle, rng):
    for _ in range(25):
        phi = np.concatenate([[0.0], rng.uniform(-0.6, 0.6, size=2)])
        ok, _ = security_check(triangle, phi)
        if not ok:
            continue
        eig = np.linalg.eigvalsh(laplacian(triangle, phi))
        assert eig.min() > 0.0


def test_laplacian_symmetric(ieee39, rng):
    phi = rng.normal(scale=0.1, size=ieee39.n)
    lap = laplacian(ieee39, phi)
    assert np.allclose(lap, lap.T)
    assert lap.shape == (38, 38)


def test_equilibrium_balanced_trivial(two_node):
    eq = find_equilibrium(two_node, {1: Quadratic(1.0)}, k=10.0)
    assert eq.lam == pytest.approx(0.0)
    assert eq.eta == pytest.approx(0.0)
    assert np.all(eq.u == 0.0)


def test_equilibrium_hand_kkt():
    # Two controllers alpha=(1,3) against a total imbalance of -2.
    net = Network(
        nodes=(
            Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=-1.0,
                 has_controller=True, alpha=1.0),
            Node(2, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=-1.0,
                 has_controller=True, alpha=3.0),
        ),
        lines=(Line(1, 2, 5.0),),
    )
    costs = {1: Quadratic(1.0), 2: Quadratic(3.0)}
    eq = find_equilibrium(net, costs, k=4.0)
    assert eq.lam == pytest.approx(1.0)
    assert eq.u[net.index_of[1]] == pytest.approx(0.5)
    assert eq.u[net.index_of[2]] == pytest.approx(1.5)
    assert eq.eta == pytest.approx(-0.5)   # sum P / k
    assert synchronized_frequency(net, eq.u) == pytest.approx(0.0, abs=1e-12)


def test_equilibrium_conditions_ieee39(ieee39, ieee39_costs):
    dp = {4: -0.33, 12: -0.33, 20: -0.33}
    p = ieee39.injection_vec.copy()
    for i, v in dp.items():
        p[ieee39.index_of[i]] += v
    net = ieee39.with_injections(p)
    eq = find_equilibrium(net, ieee39_costs, k=10.0)
    p_s = net.injection_vec.sum()
    assert abs(p_s + eq.u.sum()) <= 1e-10
    assert abs(p_s - 10.0 * eq.eta) <= 1e-10
    assert eq.secure
    assert eq.u.sum() == pytest.approx(0.99, abs=1e-10)
    assert synchronized_frequency(net, eq.u) == pytest.approx(0.0, abs=1e-12)


def test_residual_sum_bound(chain_with_passive):
    sol = solve_algebraic(chain_with_passive)
    res = chain_with_passive.injection_vec - chain_with_passive.flow_sums(sol.theta)
    assert np.abs(res[1:]).sum() <= chain_with_passive.n * 1e-10
