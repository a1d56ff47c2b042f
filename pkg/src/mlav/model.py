"""Flux laws, demand/supply splitting, exact Riemann solution and lane-changing terms.

Every lane uses the linear speed law ``v(rho) = V (1 - rho / R)``, so the flux
``F(rho) = rho v(rho)`` is a concave parabola with its maximum at ``R / 2``.
The :class:`LaneSpec` methods are unchecked and vectorised (used inside the
time-stepping loops); the module-level functions validate their inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

DOMAIN_TOL = 1e-12


class DomainError(ValueError):
    """Raised when a density or speed lies outside the admissible interval."""


@dataclass(frozen=True)
class LaneSpec:
    """Speed law of one lane: maximal speed ``V`` and jam density ``R``."""

    V: float
    R: float

    def __post_init__(self):
        if not (self.V > 0 and self.R > 0):
            raise DomainError(f"lane needs V > 0 and R > 0, got V={self.V}, R={self.R}")

    @property
    def theta(self) -> float:
        return 0.5 * self.R

    @property
    def Fmax(self) -> float:
        return 0.25 * self.V * self.R

    def velocity(self, rho):
        return self.V * (1.0 - rho / self.R)

    def flux(self, rho):
        return self.V * rho * (1.0 - rho / self.R)

    def dflux(self, rho):
        return self.V * (1.0 - 2.0 * rho / self.R)

    def hat_rho(self, u):
        return self.R * (1.0 - u / self.V)

    def demand(self, rho):
        return self.flux(np.minimum(rho, self.theta))

    def supply(self, rho):
        return self.flux(np.maximum(rho, self.theta))

    def godunov(self, left, right):
        return np.minimum(self.demand(left), self.supply(right))

    def riemann(self, left, right, xi):
        """Entropy solution of the Riemann problem ``(left | right)`` on the ray ``x = xi t``."""
        left, right, xi = np.broadcast_arrays(
            np.asarray(left, dtype=float), np.asarray(right, dtype=float), np.asarray(xi, dtype=float))
        shock_speed = self.V * (1.0 - (left + right) / self.R)
        shock = np.where(xi < shock_speed, left, right)
        fan = np.clip(0.5 * self.R * (1.0 - xi / self.V), right, left)
        out = np.where(left < right, shock, np.where(left > right, fan, left))
        return out if out.ndim else float(out)


def _check_density(spec: LaneSpec, rho):
    arr = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < -DOMAIN_TOL) or np.any(arr > spec.R + DOMAIN_TOL):
        raise DomainError(f"density outside [0, {spec.R}]: {rho!r}")
    return arr


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def velocity(spec: LaneSpec, rho):
    return _scalar(spec.velocity(_check_density(spec, rho)))


def flux(spec: LaneSpec, rho):
    return _scalar(spec.flux(_check_density(spec, rho)))


def hat_rho(spec: LaneSpec, u):
    """Density at which the traffic speed equals ``u``."""
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0) or np.any(arr > spec.V):
        raise DomainError(f"speed outside [0, {spec.V}]: {u!r}")
    return _scalar(spec.hat_rho(arr))


def demand(spec: LaneSpec, rho):
    return _scalar(spec.demand(_check_density(spec, rho)))


def supply(spec: LaneSpec, rho):
    return _scalar(spec.supply(_check_density(spec, rho)))


def godunov_flux(spec: LaneSpec, left, right):
    return _scalar(spec.godunov(_check_density(spec, left), _check_density(spec, right)))


class RiemannQuery(NamedTuple):
    left: float
    right: float
    xi: float


def riemann_eval(query: RiemannQuery, spec: LaneSpec):
    """Value of the self-similar entropy solution at ``x / t = query.xi``.

    A ray that coincides with a shock returns the right state.
    """
    left = _check_density(spec, query.left)
    right = _check_density(spec, query.right)
    return spec.riemann(left, right, query.xi)


@dataclass(frozen=True)
class SourceCoupling:
    """Lane-changing exchange between adjacent lanes.

    ``exchange(j, a, b)`` is the net rate from lane ``j`` into lane ``j + 1``
    (0-based) when their densities are ``a`` and ``b``::

        S_j = (v_{j+1}(b) - v_j(a))^+ a - (v_{j+1}(b) - v_j(a))^- b
    """

    lane_specs: tuple[LaneSpec, ...]
    lipschitz_bound: float = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "lane_specs", tuple(self.lane_specs))
        if not self.lane_specs:
            raise ValueError("at least one lane is required")
        if self.lipschitz_bound is None:
            # |dS/drho| <= |v_{j+1} - v_j| + V_j rho / R_j; densities of the neighbour lane enter through R ratios
            ratio = max([1.0] + [max(a.R / b.R, b.R / a.R) for a, b in zip(self.lane_specs, self.lane_specs[1:])])
            object.__setattr__(self, "lipschitz_bound", 2.0 * ratio * max(s.V for s in self.lane_specs))
        elif self.lipschitz_bound <= 0:
            raise ValueError("lipschitz_bound must be positive")

    @property
    def n_lanes(self) -> int:
        return len(self.lane_specs)

    def exchange(self, j: int, rho_j, rho_jp1):
        dv = self.lane_specs[j + 1].velocity(rho_jp1) - self.lane_specs[j].velocity(rho_j)
        return np.maximum(dv, 0.0) * rho_j - np.maximum(-dv, 0.0) * rho_jp1

    def net_source(self, rho: np.ndarray) -> np.ndarray:
        """``S_{j-1} - S_j`` for every lane; ``rho`` has shape ``(M, n)``."""
        out = np.zeros_like(rho, dtype=float)
        for j in range(self.n_lanes - 1):
            s = self.exchange(j, rho[j], rho[j + 1])
            out[j] -= s
            out[j + 1] += s
        return out


def lane_change_source(coupling: SourceCoupling, j: int, rho_j, rho_jp1):
    """Net flow from lane ``j`` into lane ``j + 1``; positive means lane ``j`` loses mass."""
    if not 0 <= j < coupling.n_lanes - 1:
        raise IndexError(f"no lane pair ({j}, {j + 1}) among {coupling.n_lanes} lanes")
    a = _check_density(coupling.lane_specs[j], rho_j)
    b = _check_density(coupling.lane_specs[j + 1], rho_jp1)
    return _scalar(coupling.exchange(j, a, b))


def coupling_for(specs: Sequence[LaneSpec]) -> SourceCoupling:
    return SourceCoupling(tuple(specs))
