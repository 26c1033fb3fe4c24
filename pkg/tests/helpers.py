"""Independent oracles used by several test modules."""

import itertools

import numpy as np


def brute_force_dispatch(costs, u_s, rounds=7, points=13, half_width=None):
    """Grid-refinement minimization of sum_i J_i(u_i) on the budget plane.

    Free coordinates are u_1..u_{m-1}; the last input closes the budget.
    Returns the best objective found.  Deliberately independent of the
    clearing solver: no marginal conditions, just objective evaluation.
    """
    m = len(costs)
    if half_width is None:
        half_width = abs(u_s) + 2.0
    if m == 1:
        return costs[0].value(u_s)
    center = np.full(m - 1, u_s / m)
    width = half_width
    best_val = np.inf
    best_free = center.copy()
    for _ in range(rounds):
        axes = [np.linspace(c - width, c + width, points) for c in center]
        for combo in itertools.product(*axes):
            last = u_s - sum(combo)
            try:
                val = sum(c.value(u) for c, u in zip(costs, list(combo) + [last]))
            except Exception:
                continue
            if val < best_val:
                best_val = val
                best_free = np.array(combo)
        center = best_free
        width *= 2.0 / (points - 1)
    return best_val


def finite_difference_gradient(f, x, h=1e-6):
    x = np.asarray(x, float)
    g = np.zeros_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def finite_difference_hessian(f, x, h=1e-5):
    x = np.asarray(x, float)
    n = len(x)
    hess = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            ea = np.zeros(n)
            eb = np.zeros(n)
            ea[a] = h
            eb[b] = h
            hess[a, b] = (f(x + ea + eb) - f(x + ea - eb)
                          - f(x - ea + eb) + f(x - ea - eb)) / (4 * h * h)
    return hess
