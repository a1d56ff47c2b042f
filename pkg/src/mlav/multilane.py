"""Fractional-step Godunov solver for multi-lane traffic with autonomous vehicles.

One time step does, in this order:

1. pick ``dt`` from the stability bound,
2. assemble the demand/supply interface fluxes of every lane,
3. for every AV whose flux constraint is active, reconstruct the
   non-classical shock inside its cell and patch the two interface fluxes,
4. apply the conservative update,
5. relax the lane-changing source with an explicit Euler step,
6. move the AVs with the pre-step densities.

Lane indices are 0-based throughout the API.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .model import DOMAIN_TOL, LaneSpec, SourceCoupling

log = logging.getLogger(__name__)

C_SAFE = 0.9


class SimulationError(RuntimeError):
    """Raised when a run cannot continue (non-finite data, AV collision, ...)."""


class StepError(SimulationError):
    """Raised when a step is requested with an unstable time step."""


class ConfigError(ValueError):
    pass


class Boundary(str, Enum):
    ZERO_GRADIENT = "zero-gradient"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    n_cells: int
    boundary: Boundary = Boundary.ZERO_GRADIENT

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if self.n_cells < 1 or not self.x_max > self.x_min:
            raise ConfigError(f"invalid grid [{self.x_min}, {self.x_max}] with {self.n_cells} cells")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def cell_index(self, y: float) -> int:
        # cells are half-open [x_{k-1/2}, x_{k+1/2}); an AV on an interface belongs to the right cell
        k = int(math.floor((y - self.x_min) / self.dx))
        return min(max(k, 0), self.n_cells - 1)

    def cell_averages(self, profile: Callable[[np.ndarray], np.ndarray], order: int = 4) -> np.ndarray:
        """Cell means of ``profile`` by Gauss-Legendre quadrature on every cell."""
        nodes, weights = np.polynomial.legendre.leggauss(order)
        left = self.x_min + np.arange(self.n_cells) * self.dx
        pts = left[:, None] + 0.5 * self.dx * (nodes[None, :] + 1.0)
        return 0.5 * (np.asarray(profile(pts), dtype=float) * weights).sum(axis=1)


@dataclass(frozen=True)
class Schedule:
    """Piecewise-constant desired speed.

    ``values[i]`` holds on ``[breakpoints[i-1], breakpoints[i])``, with the first
    value extending to ``-inf`` and the last to ``+inf``.
    """

    values: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.values) != len(self.breakpoints) + 1:
            raise ConfigError("a schedule needs exactly one more value than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ConfigError("schedule breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, u: float) -> "Schedule":
        return cls((u,))

    def __call__(self, t: float) -> float:
        return self.values[int(np.searchsorted(self.breakpoints, t, side="right"))]

    def average(self, t0: float, t1: float) -> float:
        """Exact mean of the schedule over ``[t0, t1]``."""
        if t1 <= t0:
            return self(t0)
        inner = [b for b in self.breakpoints if t0 < b < t1]
        if not inner:
            return self(t0)
        edges = [t0] + inner + [t1]
        total = sum((b - a) * self(a) for a, b in zip(edges, edges[1:]))
        return total / (t1 - t0)

    @property
    def max_value(self) -> float:
        return max(self.values)

    @property
    def min_value(self) -> float:
        return min(self.values)


@dataclass
class AvState:
    lane: int
    y: float
    schedule: Schedule
    realized_speed: float = 0.0
    constraint_active: bool = False
    on_road: bool = True


@dataclass
class MultiLaneState:
    t: float
    rho: np.ndarray
    avs: list[AvState] = field(default_factory=list)

    def __post_init__(self):
        self.rho = np.atleast_2d(np.asarray(self.rho, dtype=float))

    def copy(self) -> "MultiLaneState":
        return MultiLaneState(self.t, self.rho.copy(), [copy.copy(av) for av in self.avs])

    @property
    def n_lanes(self) -> int:
        return self.rho.shape[0]


@dataclass
class AvEvent:
    av_index: int
    lane: int
    cell: int
    u: float
    d: float
    dt_m: float
    left_flux: float
    right_flux: float


@dataclass
class StepDiagnostics:
    dt_used: float
    mass_per_lane: np.ndarray
    av_events: list[AvEvent]
    excursion: float = 0.0  # largest distance outside [0, R_j] of the half and full step, before clamping


class Bottleneck(NamedTuple):
    """States of the non-classical shock attached to a moving bottleneck.

    ``upper`` is the queue density behind the vehicle, ``lower`` the density
    released downstream and ``capacity`` the flow allowed through it in the
    vehicle frame. A zero-capacity bottleneck has ``lower = capacity = 0``.
    """

    upper: float
    lower: float
    capacity: float


def zero_capacity(spec: LaneSpec, u: float) -> Bottleneck:
    return Bottleneck(spec.hat_rho(u), 0.0, 0.0)


def validate_state(state: MultiLaneState, grid: GridSpec, specs: Sequence[LaneSpec]) -> None:
    if state.rho.shape != (len(specs), grid.n_cells):
        raise ConfigError(f"density array has shape {state.rho.shape}, expected {(len(specs), grid.n_cells)}")
    for j, spec in enumerate(specs):
        lane = state.rho[j]
        if not np.all(np.isfinite(lane)) or lane.min() < -DOMAIN_TOL or lane.max() > spec.R + DOMAIN_TOL:
            raise ConfigError(f"lane {j} densities outside [0, {spec.R}]")
    seen = set()
    for av in state.avs:
        if not 0 <= av.lane < len(specs):
            raise ConfigError(f"AV on unknown lane {av.lane}")
        if not grid.x_min <= av.y <= grid.x_max:
            raise ConfigError(f"AV position {av.y} outside the grid")
        if av.schedule.min_value < 0 or av.schedule.max_value > specs[av.lane].V:
            raise ConfigError(f"AV desired speed outside [0, {specs[av.lane].V}]")
        if av.on_road:
            key = (av.lane, grid.cell_index(av.y))
            if key in seen:
                raise SimulationError(f"two AVs in lane {av.lane} share cell {key[1]}")
            seen.add(key)


def cfl_dt(grid: GridSpec, coupling: SourceCoupling, tau: float, c_safe: float = C_SAFE) -> float:
    """Largest stable time step, ``c_safe * min(dx / max|F'|, tau / (2 S))``."""
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    wave = grid.dx / max(s.V for s in coupling.lane_specs)
    relax = tau / (2.0 * coupling.lipschitz_bound)
    return c_safe * min(wave, relax)


def _ghosts(lane: np.ndarray, grid: GridSpec) -> tuple[float, float]:
    if grid.periodic:
        return lane[-1], lane[0]
    return lane[0], lane[-1]


def neighbours(lane: np.ndarray, m: int, grid: GridSpec) -> tuple[float, float]:
    """Densities of cells ``m - 1`` and ``m + 1``, filled by the boundary rule at the edges."""
    n = lane.size
    lg, rg = _ghosts(lane, grid)
    left = lane[m - 1] if m > 0 else lg
    right = lane[m + 1] if m < n - 1 else rg
    return float(left), float(right)


def interface_fluxes(spec: LaneSpec, lane: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Godunov fluxes at the ``n + 1`` interfaces; entry ``k`` sits left of cell ``k``."""
    lg, rg = _ghosts(lane, grid)
    ext = np.concatenate(([lg], lane, [rg]))
    return spec.godunov(ext[:-1], ext[1:])


def conservative_update(state: MultiLaneState, grid: GridSpec, specs: Sequence[LaneSpec], dt: float,
                        fluxes: Sequence[np.ndarray] | None = None) -> MultiLaneState:
    """First half of the fractional step: ``rho - dt/dx (F_{k+1/2} - F_{k-1/2})`` on every lane."""
    vmax = max(s.V for s in specs)
    if dt * vmax > grid.dx * (1.0 + 1e-12):
        raise StepError(f"dt={dt} violates the CFL bound dx/V={grid.dx / vmax}")
    if fluxes is None:
        fluxes = [interface_fluxes(spec, state.rho[j], grid) for j, spec in enumerate(specs)]
    lam = dt / grid.dx
    rho = np.empty_like(state.rho)
    for j in range(len(specs)):
        fl = fluxes[j]
        rho[j] = state.rho[j] - lam * (fl[1:] - fl[:-1])
    return MultiLaneState(state.t, rho, state.avs)


def source_relaxation_step(state: MultiLaneState, coupling: SourceCoupling, tau: float,
                           dt: float) -> MultiLaneState:
    """Explicit Euler step of the lane-changing exchange; the per-cell lane total is unchanged."""
    if math.isinf(tau) or coupling.n_lanes < 2:
        return MultiLaneState(state.t, state.rho.copy(), state.avs)
    if dt > tau / (2.0 * coupling.lipschitz_bound) * (1.0 + 1e-12):
        raise StepError(f"dt={dt} exceeds the relaxation bound tau/(2S)={tau / (2.0 * coupling.lipschitz_bound)}")
    rho = state.rho.copy()
    h = dt / tau
    for j in range(coupling.n_lanes - 1):
        # both lanes see the identical increment so the pair sum is preserved
        s = h * coupling.exchange(j, state.rho[j], state.rho[j + 1])
        rho[j] -= s
        rho[j + 1] += s
    return MultiLaneState(state.t, rho, state.avs)


def _constraint_test(spec: LaneSpec, left: float, right: float, u: float, bn: Bottleneck) -> bool:
    value = spec.riemann(left, right, u)
    return bool(spec.flux(value) - u * value > bn.capacity)


def av_constraint_active(av: AvState, state: MultiLaneState, specs: Sequence[LaneSpec], grid: GridSpec,
                         u: float | None = None, bottleneck: Bottleneck | None = None) -> bool:
    """True when traffic would overtake the AV, i.e. its flux constraint binds this step."""
    if not av.on_road:
        return False
    spec = specs[av.lane]
    u = av.schedule(state.t) if u is None else u
    if u >= spec.V:
        return False
    bn = zero_capacity(spec, u) if bottleneck is None else bottleneck
    left, right = neighbours(state.rho[av.lane], grid.cell_index(av.y), grid)
    return _constraint_test(spec, left, right, u, bn)


def av_reconstruct(av: AvState, state: MultiLaneState, specs: Sequence[LaneSpec], grid: GridSpec,
                   u: float | None = None, bottleneck: Bottleneck | None = None) -> tuple[float, float]:
    """Shock position fraction ``d`` inside the AV cell and the time ``dt_m`` it needs to leave it.

    ``d`` is chosen so that the two-state reconstruction has the cell's mass;
    it is clamped to ``[0, 1]``. ``dt_m`` is infinite for a stopped vehicle.
    """
    spec = specs[av.lane]
    u = av.schedule(state.t) if u is None else u
    bn = zero_capacity(spec, u) if bottleneck is None else bottleneck
    rho_m = float(state.rho[av.lane, grid.cell_index(av.y)])
    return _reconstruct(rho_m, u, bn, grid.dx)


def _reconstruct(rho_m: float, u: float, bn: Bottleneck, dx: float) -> tuple[float, float]:
    span = bn.upper - bn.lower
    d = (rho_m - bn.lower) / span if span > 0 else 1.0
    d = min(max(d, 0.0), 1.0)
    dt_m = dx * (1.0 - d) / u if u > 0 else math.inf
    return d, dt_m


def patched_fluxes(spec: LaneSpec, rho_left: float, rho_m: float, bn: Bottleneck, dt_m: float,
                   dt: float) -> tuple[float, float]:
    """Replacement fluxes at the left and right interfaces of the AV cell.

    The right flux is the time average over the step: ``F(lower)`` until the
    reconstructed shock reaches the interface after ``dt_m``, ``F(upper)`` after.
    When the cell is already denser than the queue state the left flux is
    taken against the cell density, which keeps the update inside ``[0, R]``.
    """
    left = float(spec.godunov(rho_left, max(bn.upper, rho_m)))
    share = 1.0 - dt_m / dt if math.isfinite(dt_m) else 0.0
    share = min(max(share, 0.0), 1.0)
    right = float((1.0 - share) * spec.flux(bn.lower) + share * spec.flux(bn.upper))
    return left, right


def apply_av_fluxes(fluxes: np.ndarray, m: int, spec: LaneSpec, rho_left: float, rho_m: float,
                    bottleneck: Bottleneck, dt_m: float, dt: float, grid: GridSpec) -> np.ndarray:
    """Return a copy of a lane's interface fluxes with both interfaces of cell ``m`` replaced."""
    out = np.array(fluxes, dtype=float)
    left, right = patched_fluxes(spec, rho_left, rho_m, bottleneck, dt_m, dt)
    _set_interface(out, m, left, grid)
    _set_interface(out, m + 1, right, grid)
    return out


def _set_interface(fl: np.ndarray, i: int, value: float, grid: GridSpec) -> None:
    fl[i] = value
    if grid.periodic and i in (0, fl.size - 1):
        fl[0] = fl[-1] = value


def av_advance(av: AvState, state: MultiLaneState, specs: Sequence[LaneSpec], grid: GridSpec, dt: float,
               constraint_active: bool, u: float | None = None) -> AvState:
    """Explicit Euler move: at ``u`` when constrained, else at ``min(u, v(rho_m))``."""
    if not av.on_road:
        return replace(av, realized_speed=0.0, constraint_active=False)
    spec = specs[av.lane]
    u = av.schedule.average(state.t, state.t + dt) if u is None else u
    if constraint_active:
        speed = u
    else:
        rho_m = float(state.rho[av.lane, grid.cell_index(av.y)])
        speed = min(u, float(spec.velocity(rho_m)))
    speed = min(max(speed, 0.0), spec.V)
    y = av.y + speed * dt
    on_road = True
    if y >= grid.x_max:
        if grid.periodic:
            y = grid.x_min + (y - grid.x_min) % (grid.x_max - grid.x_min)
        else:
            y, on_road = grid.x_max, False
    return replace(av, y=y, realized_speed=speed, constraint_active=constraint_active, on_road=on_road)


BottleneckRule = Callable[[LaneSpec, float], Bottleneck]


def step(state: MultiLaneState, grid: GridSpec, specs: Sequence[LaneSpec], coupling: SourceCoupling, tau: float,
         dt: float | None = None, bottleneck: BottleneckRule = zero_capacity,
         ) -> tuple[MultiLaneState, StepDiagnostics]:
    """Advance the coupled PDE-ODE system by one fractional step."""
    dt_max = cfl_dt(grid, coupling, tau)
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1.0 + 1e-12):
        raise StepError(f"dt={dt} exceeds the stable step {dt_max}")

    fluxes = [interface_fluxes(spec, state.rho[j], grid) for j, spec in enumerate(specs)]
    patches = [np.full(grid.n_cells + 1, np.inf) for _ in specs]
    events: list[AvEvent] = []
    flags: list[bool] = []
    speeds: list[float] = []
    for idx, av in enumerate(state.avs):
        spec = specs[av.lane]
        u = av.schedule.average(state.t, state.t + dt)
        speeds.append(u)
        if not av.on_road or u >= spec.V:
            flags.append(False)
            continue
        bn = bottleneck(spec, u)
        lane = state.rho[av.lane]
        m = grid.cell_index(av.y)
        left_rho, right_rho = neighbours(lane, m, grid)
        active = _constraint_test(spec, left_rho, right_rho, u, bn)
        flags.append(active)
        if not active:
            continue
        d, dt_m = _reconstruct(float(lane[m]), u, bn, grid.dx)
        fl, fr = patched_fluxes(spec, left_rho, float(lane[m]), bn, dt_m, dt)
        # several AVs touching one interface: the most restrictive flux wins
        for i, value in ((m, fl), (m + 1, fr)):
            patches[av.lane][i] = min(patches[av.lane][i], value)
        events.append(AvEvent(idx, av.lane, m, u, d, dt_m, fl, fr))

    for j in range(len(specs)):
        p = patches[j]
        hit = np.isfinite(p)
        if hit.any():
            fl = fluxes[j]
            for i in np.flatnonzero(hit):
                _set_interface(fl, int(i), float(p[i]), grid)

    half = conservative_update(state, grid, specs, dt, fluxes)
    full = source_relaxation_step(half, coupling, tau, dt)

    excursion = 0.0
    for j, spec in enumerate(specs):
        lane = full.rho[j]
        if not np.all(np.isfinite(lane)):
            raise SimulationError(f"non-finite density in lane {j} at t={state.t + dt}")
        # both the intermediate and the final densities count towards the excursion
        for values in (half.rho[j], lane):
            excursion = max(excursion, float(-values.min()), float(values.max() - spec.R))
        np.clip(lane, 0.0, spec.R, out=lane)
    if excursion > DOMAIN_TOL:
        log.warning("densities left the invariant domain by %.3e at t=%g", excursion, state.t + dt)

    new_avs = [av_advance(av, state, specs, grid, dt, flag, u) for av, flag, u in zip(state.avs, flags, speeds)]
    new_state = MultiLaneState(state.t + dt, full.rho, new_avs)
    _check_collisions(new_avs, grid)
    diag = StepDiagnostics(dt, full.rho.sum(axis=1) * grid.dx, events, max(excursion, 0.0))
    return new_state, diag


def _check_collisions(avs: Iterable[AvState], grid: GridSpec) -> None:
    seen = set()
    for av in avs:
        if not av.on_road:
            continue
        key = (av.lane, grid.cell_index(av.y))
        if key in seen:
            raise SimulationError(f"two AVs in lane {av.lane} share cell {key[1]}")
        seen.add(key)


@dataclass
class AvRecord:
    t: float
    lane: int
    av_index: int
    y: float
    realized_speed: float
    constraint_active: bool


@dataclass
class RunResult:
    final: MultiLaneState
    samples: list[MultiLaneState]
    av_history: list[AvRecord]
    diagnostics: list[StepDiagnostics]

    @property
    def n_steps(self) -> int:
        return len(self.diagnostics)

    @property
    def max_excursion(self) -> float:
        return max((d.excursion for d in self.diagnostics), default=0.0)


def _record(history: list[AvRecord], state: MultiLaneState) -> None:
    for i, av in enumerate(state.avs):
        history.append(AvRecord(state.t, av.lane, i, av.y, av.realized_speed, av.constraint_active))


def run(initial: MultiLaneState, grid: GridSpec, specs: Sequence[LaneSpec], coupling: SourceCoupling,
        tau: float, t_final: float, observers: Sequence[float] = (), bottleneck: BottleneckRule = zero_capacity,
        dt: float | None = None, keep_diagnostics: bool = True) -> RunResult:
    """Step from ``initial.t`` to ``t_final``; the last step is shortened to land on ``t_final``.

    ``observers`` are output times; each is served by the completed step
    closest to it.
    """
    if t_final < initial.t:
        raise ConfigError(f"t_final={t_final} precedes the initial time {initial.t}")
    validate_state(initial, grid, specs)
    dt_full = cfl_dt(grid, coupling, tau) if dt is None else dt
    pending = sorted(observers)
    samples: list[MultiLaneState] = []
    history: list[AvRecord] = []
    diagnostics: list[StepDiagnostics] = []

    state = initial.copy()
    _record(history, state)
    while pending and pending[0] <= state.t:
        samples.append(state.copy())
        pending.pop(0)
    n = 0
    while state.t < t_final:
        remaining = t_final - state.t
        h = remaining if remaining <= dt_full * (1.0 + 1e-9) else dt_full
        prev = state
        try:
            state, diag = step(prev, grid, specs, coupling, tau, dt=min(h, dt_full), bottleneck=bottleneck)
        except SimulationError as exc:
            raise SimulationError(f"step {n}: {exc}") from exc
        n += 1
        if h >= remaining:
            state.t = t_final
        if keep_diagnostics:
            diagnostics.append(diag)
        else:
            diagnostics.append(StepDiagnostics(diag.dt_used, diag.mass_per_lane, [], diag.excursion))
        _record(history, state)
        while pending and pending[0] <= state.t:
            target = pending.pop(0)
            nearer = prev if abs(prev.t - target) < abs(state.t - target) else state
            samples.append(nearer.copy())
    return RunResult(state, samples, history, diagnostics)
