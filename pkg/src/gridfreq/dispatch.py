"""Economic dispatch: convex cost models and marginal-cost clearing.

Clearing splits a total control input ``u_s`` across controllers so that
all marginal costs equal a common nodal price, which solves

    min sum_i J_i(u_i)   s.t.   sum_i u_i = u_s.

All-quadratic fleets clear in closed form; otherwise a safeguarded Newton
iteration on the price solves ``sum_i J_i'^{-1}(lam) = u_s``, which has a
unique root because each inverse marginal is strictly increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, Infeasible, NonConvergence


@dataclass(frozen=True)
class Quadratic:
    """Cost u^2 / alpha with marginal 2u / alpha."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")

    def value(self, u: float) -> float:
        return u * u / self.alpha

    def marginal(self, u: float) -> float:
        return 2.0 * u / self.alpha

    def inverse_marginal(self, lam: float) -> float:
        return self.alpha * lam / 2.0

    def curvature(self, u: float) -> float:
        return 2.0 / self.alpha

    @property
    def bounds(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class BarrierQuadratic:
    """Quadratic cost plus a logarithmic barrier keeping u in (u_lo, u_hi).

    J(u) = u^2/alpha - mu*[log(u - u_lo) + log(u_hi - u)].  The marginal is
    strictly increasing from -inf to +inf on the open interval, so the
    inverse marginal is defined for every real price.
    """

    alpha: float
    u_lo: float
    u_hi: float
    mu: float = 1e-3

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ValueError("alpha must be positive")
        if not (self.u_lo < self.u_hi):
            raise ValueError("u_lo must be below u_hi")
        if not (math.isfinite(self.u_lo) and math.isfinite(self.u_hi)):
            raise ValueError("barrier bounds must be finite")
        if not self.mu > 0.0:
            raise ValueError("mu must be positive")

    def _check(self, u: float) -> None:
        if not (self.u_lo < u < self.u_hi):
            raise DomainError(
                f"input {u} outside open interval ({self.u_lo}, {self.u_hi})")

    def value(self, u: float) -> float:
        self._check(u)
        return (u * u / self.alpha
                - self.mu * (math.log(u - self.u_lo) + math.log(self.u_hi - u)))

    def marginal(self, u: float) -> float:
        self._check(u)
        return 2.0 * u / self.alpha - self.mu / (u - self.u_lo) + self.mu / (self.u_hi - u)

    def curvature(self, u: float) -> float:
        self._check(u)
        return (2.0 / self.alpha
                + self.mu / (u - self.u_lo) ** 2
                + self.mu / (self.u_hi - u) ** 2)

    def inverse_marginal(self, lam: float) -> float:
        # Safeguarded Newton on marginal(u) = lam over the open interval.
        lo, hi = self.u_lo, self.u_hi
        u = 0.5 * (lo + hi)
        for _ in range(200):
            g = self.marginal(u) - lam
            if abs(g) <= 1e-12 * max(1.0, abs(lam)):
                return u
            if g > 0.0:
                hi = u
            else:
                lo = u
            step = -g / self.curvature(u)
            u_new = u + step
            if not (lo < u_new < hi):
                u_new = 0.5 * (lo + hi)
            if u_new == u:
                return u
            u = u_new
        raise NonConvergence("inverse marginal iteration failed to converge")

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.u_lo, self.u_hi)


CostModel = Quadratic | BarrierQuadratic


@dataclass(frozen=True)
class DispatchResult:
    lam: float
    u: np.ndarray
    residual: float


def clear(costs, u_s: float, tol: float = 1e-12) -> DispatchResult:
    """Split ``u_s`` across controllers at a common marginal cost."""
    costs = list(costs)
    if not costs:
        raise ValueError("clear requires at least one controller")
    lo = sum(c.bounds[0] for c in costs)
    hi = sum(c.bounds[1] for c in costs)
    if not (lo < u_s < hi):
        raise Infeasible(
            f"total input {u_s} outside the aggregate bound interval ({lo}, {hi})")

    if len(costs) == 1:
        u = np.array([float(u_s)])
        return DispatchResult(costs[0].marginal(u_s), u, 0.0)

    if all(isinstance(c, Quadratic) for c in costs):
        alpha = np.array([c.alpha for c in costs])
        lam = 2.0 * u_s / alpha.sum()
        u = alpha * lam / 2.0
        return DispatchResult(float(lam), u, abs(u.sum() - u_s))

    return _clear_newton(costs, u_s, tol)


def _clear_newton(costs, u_s: float, tol: float) -> DispatchResult:
    scale = max(1.0, abs(u_s))

    def g(lam):
        return sum(c.inverse_marginal(lam) for c in costs) - u_s

    # Bracket the root; g is strictly increasing and onto.
    lo, hi, step = 0.0, 0.0, 1.0
    for _ in range(200):
        if g(lo) <= 0.0:
            break
        lo -= step
        step *= 2.0
    else:
        raise NonConvergence("could not bracket clearing price from below")
    step = 1.0
    for _ in range(200):
        if g(hi) >= 0.0:
            break
        hi += step
        step *= 2.0
    else:
        raise NonConvergence("could not bracket clearing price from above")

    lam = 0.5 * (lo + hi)
    for _ in range(200):
        u = [c.inverse_marginal(lam) for c in costs]
        gv = sum(u) - u_s
        if abs(gv) <= tol * scale:
            ua = np.array(u)
            return DispatchResult(float(lam), ua, abs(ua.sum() - u_s))
        if gv > 0.0:
            hi = lam
        else:
            lo = lam
        gp = sum(1.0 / c.curvature(ui) for c, ui in zip(costs, u))
        lam_new = lam - gv / gp
        if not (lo < lam_new < hi):
            lam_new = 0.5 * (lo + hi)
        lam = lam_new
    raise NonConvergence("clearing price iteration failed to converge")
