"""Scalar reference models for the total density ``r``.

``run_limit_lwr`` solves the relaxation limit ``r_t + f(r)_x = 0`` with the
aggregated flux ``f(r) = M F(r / M)``. ``run_mb`` adds a moving bottleneck
that may let through at most ``F_half(u)`` in its own frame, with

    F_half(u) = max_{r in [0, R]} (f(2r) / 2 - r u).

For the linear speed law ``f`` is again a parabola, with maximal speed ``V``
and jam density ``M R``, so both solvers reuse the multi-lane grid machinery
on a single lane without source.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import DomainError, LaneSpec, SourceCoupling
from .multilane import (AvState, Bottleneck, GridSpec, MultiLaneState, RunResult, Schedule,
                        run as run_multilane)

GRID_CHECK_STEP = 1e-4
GRID_CHECK_TOL = 1e-8


@dataclass(frozen=True)
class LimitSpec:
    """Lane law ``base`` folded over ``M`` identical lanes."""

    M: int
    base: LaneSpec

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")

    @property
    def aggregate(self) -> LaneSpec:
        return LaneSpec(self.base.V, self.M * self.base.R)

    @property
    def R_total(self) -> float:
        return self.M * self.base.R

    def f(self, r):
        return self.M * self.base.flux(np.asarray(r, dtype=float) / self.M)

    def tilde_v(self, r):
        return self.base.velocity(np.asarray(r, dtype=float) / self.M)


@dataclass(frozen=True)
class MbTraces:
    u: float
    f_alpha: float
    r_check: float
    r_hat: float
    rho_star: float
    r_star: float


def _limiter_closed_form(spec: LimitSpec, u: float) -> tuple[float, float]:
    # f(2r)/2 = (M/2) F(2r/M); maximise F(s) - s u over s in [0, R] and rescale
    V, R = spec.base.V, spec.base.R
    s = R * (V - u) / (2.0 * V)
    return 0.5 * spec.M * R * (V - u) ** 2 / (4.0 * V), 0.5 * spec.M * s


def _limiter_grid(spec: LimitSpec, u: float, step: float = GRID_CHECK_STEP) -> float:
    r = np.linspace(0.0, spec.R_total / 2.0, int(round(spec.R_total / 2.0 / step)) + 1)
    return float(np.max(0.5 * spec.f(2.0 * r) - r * u))


def flux_limiter(spec: LimitSpec, u: float, check: bool = True) -> float:
    """Maximal flow past a bottleneck occupying half the road, in the bottleneck frame."""
    if not 0.0 <= u <= spec.base.V:
        raise DomainError(f"speed {u} outside [0, {spec.base.V}]")
    value, _ = _limiter_closed_form(spec, u)
    if check:
        ref = _limiter_grid(spec, u)
        if abs(ref - value) > GRID_CHECK_TOL:
            raise ArithmeticError(f"closed-form limiter {value} disagrees with grid search {ref}")
    return value


def _trace_roots(spec: LimitSpec, u: float, fa: float) -> tuple[float, float]:
    # f(r) - u r = fa  <=>  (V / R_tot) r^2 - (V - u) r + fa = 0
    a = spec.base.V / spec.R_total
    b = spec.base.V - u
    disc = math.sqrt(max(b * b - 4.0 * a * fa, 0.0))
    return (b - disc) / (2.0 * a), (b + disc) / (2.0 * a)


def mb_traces(spec: LimitSpec, u: float) -> MbTraces:
    """Left/right traces of the bottleneck's non-classical shock and the related densities."""
    if not 0.0 < u < spec.base.V:
        raise DomainError(f"traces need 0 < u < V={spec.base.V}, got {u}")
    fa = flux_limiter(spec, u)
    r_check, r_hat = _trace_roots(spec, u, fa)
    rho_star = spec.base.hat_rho(u)
    return MbTraces(u, fa, r_check, r_hat, rho_star, spec.M * rho_star)


def _single_lane(spec: LimitSpec, r0: np.ndarray, grid: GridSpec, avs=()):
    agg = spec.aggregate
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (grid.n_cells,):
        raise ValueError(f"initial data has shape {r0.shape}, expected ({grid.n_cells},)")
    return agg, MultiLaneState(0.0, r0[None, :].copy(), list(avs)), SourceCoupling((agg,))


def run_limit_lwr(r0, grid: GridSpec, spec: LimitSpec, t_final: float, observers=()) -> RunResult:
    """Godunov solution of the relaxation-limit LWR equation for the total density."""
    agg, state, coupling = _single_lane(spec, r0, grid)
    return run_multilane(state, grid, [agg], coupling, math.inf, t_final, observers)


@lru_cache(maxsize=256)
def mb_bottleneck(spec: LimitSpec, u: float) -> Bottleneck:
    """Queue state, released state and capacity of the scalar model's bottleneck at speed ``u``."""
    fa = flux_limiter(spec, u)
    r_check, r_hat = _trace_roots(spec, u, fa)
    return Bottleneck(r_hat, r_check, fa)


def run_mb(r0, grid: GridSpec, spec: LimitSpec, schedule: Schedule | float, y0: float, t_final: float,
           observers=()) -> RunResult:
    """Scalar moving-bottleneck model: LWR for ``r`` with the ``F_half`` constraint at the AV."""
    if not isinstance(schedule, Schedule):
        schedule = Schedule.constant(float(schedule))
    av = AvState(lane=0, y=float(y0), schedule=schedule)
    agg, state, coupling = _single_lane(spec, r0, grid, [av])
    rule = lambda lane, u: mb_bottleneck(spec, float(u))  # noqa: E731
    return run_multilane(state, grid, [agg], coupling, math.inf, t_final, observers, bottleneck=rule)
