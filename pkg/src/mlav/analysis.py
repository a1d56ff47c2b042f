"""Norms, trace extraction and the study drivers built on the solvers."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .model import LaneSpec
from .multilane import AvState, GridSpec, MultiLaneState, RunResult, run
from .scalar import LimitSpec, mb_traces, run_limit_lwr, run_mb
from .scenarios import ScenarioConfig, builtin_scenario, with_grid

TRACE_WINDOW = 5


class TraceError(ValueError):
    pass


def l1_distance(a, b, dx: float) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(dx * np.abs(a - b).sum())


def total_variation(a) -> float:
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        raise ValueError("total variation of an empty array")
    return float(np.abs(np.diff(a)).sum())


def total_density(state: MultiLaneState) -> np.ndarray:
    return state.rho.sum(axis=0)


def extract_av_traces(field_: np.ndarray, av: AvState, grid: GridSpec, window: int = TRACE_WINDOW
                      ) -> tuple[float, float]:
    """Densities ``window`` cells upstream and downstream of the AV's cell.

    ``field_`` is one cell array (a lane, or the total density).
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    values = np.asarray(field_, dtype=float)
    m = grid.cell_index(av.y)
    lo, hi = m - window, m + window
    if grid.periodic:
        return float(values[lo % values.size]), float(values[hi % values.size])
    if lo < 0 or hi >= values.size:
        raise TraceError(f"AV in cell {m} is within {window} cells of the boundary")
    return float(values[lo]), float(values[hi])


@dataclass
class StudyReport:
    """Rows of ``{parameter or metric name: value}`` with a fixed column order.

    Metrics must be finite; columns listed in ``parameters`` (inputs such as
    ``tau``) may hold infinities.
    """

    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    series: dict[str, np.ndarray] = field(default_factory=dict)
    parameters: tuple[str, ...] = ("tau", "dx", "t")

    def add(self, **row) -> None:
        for key, value in row.items():
            if key in self.parameters:
                pass
            elif isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"{self.name}: non-finite metric {key}={value}")
            if key not in self.columns:
                self.columns.append(key)
        self.rows.append(row)

    def column(self, key: str) -> list:
        return [row.get(key) for row in self.rows]


def _reference_spec(cfg: ScenarioConfig) -> LimitSpec:
    radii = {s.R for s in cfg.lanes}
    if len(radii) != 1:
        raise ValueError("the relaxation limit needs a common jam density across lanes")
    v_mean = float(np.mean([s.V for s in cfg.lanes]))
    return LimitSpec(len(cfg.lanes), LaneSpec(v_mean, radii.pop()))


def relaxation_study(cfg: ScenarioConfig | str, taus: Sequence[float], dx: float | None = None,
                     t_final: float | None = None) -> StudyReport:
    """L1 distance at ``t_final`` between the multi-lane total density and the limit LWR solution."""
    cfg = builtin_scenario(cfg) if isinstance(cfg, str) else cfg
    if dx is not None:
        cfg = with_grid(cfg, dx=dx)
    t_final = cfg.t_final if t_final is None else t_final
    grid = cfg.grid
    state = cfg.initial_state()
    ref_spec = _reference_spec(cfg)

    start = time.perf_counter()
    reference = run_limit_lwr(total_density(state), grid, ref_spec, t_final).final.rho[0]
    report = StudyReport("relaxation", ["scenario", "tau", "dx", "l1_distance", "runtime_s"])
    report.series["x"] = grid.centers
    report.series["reference"] = reference
    ref_time = time.perf_counter() - start
    for tau in taus:
        start = time.perf_counter()
        res = run(state, grid, cfg.lanes, cfg.coupling, float(tau), t_final)
        r = total_density(res.final)
        report.series[f"tau={tau:g}"] = r
        report.add(scenario=cfg.name, tau=float(tau), dx=grid.dx, l1_distance=l1_distance(r, reference, grid.dx),
                   runtime_s=time.perf_counter() - start + ref_time)
    return report


def _ordering(values: Sequence[float], margin: float) -> bool:
    return all(a - b >= margin for a, b in zip(values, values[1:]))


def mb_comparison_study(ic: str, tau: float | None = None, dx: float | None = None, t_final: float | None = None,
                        u: float | None = None, window: int = TRACE_WINDOW, margin: float = 0.0) -> StudyReport:
    """Two-lane model with one AV against the scalar moving-bottleneck model for ``r0 = rho1 + rho2``.

    The ordering ``r(y-) > (rho1+rho2)(y-) > (rho1+rho2)(y+) > r(y+)`` is only
    meaningful when the scalar bottleneck binds; otherwise it is reported as
    ``n/a``.
    """
    name = ic if ic.startswith("mb-") else f"mb-{ic}"
    cfg = builtin_scenario(name)
    if dx is not None:
        cfg = with_grid(cfg, dx=dx)
    if tau is not None:
        cfg = replace(cfg, tau=float(tau))
    if u is not None:
        cfg = replace(cfg, avs=[replace(a, schedule=type(a.schedule).constant(float(u))) for a in cfg.avs])
    t_final = cfg.t_final if t_final is None else t_final
    if len(cfg.lanes) != 2 or len(cfg.avs) != 1 or cfg.lanes[0] != cfg.lanes[1]:
        raise ValueError("the comparison needs two identical lanes and a single AV")
    grid = cfg.grid
    av0 = cfg.avs[0]
    limit = LimitSpec(2, cfg.lanes[0])

    start = time.perf_counter()
    state = cfg.initial_state()
    multi = run(state, grid, cfg.lanes, cfg.coupling, cfg.tau, t_final, keep_diagnostics=False)
    mb = run_mb(total_density(state), grid, limit, av0.schedule, av0.y0, t_final)
    elapsed = time.perf_counter() - start

    av_multi, av_mb = multi.final.avs[0], mb.final.avs[0]
    total = total_density(multi.final)
    lane_l, lane_r = extract_av_traces(multi.final.rho[av0.lane], av_multi, grid, window)
    tot_l, tot_r = extract_av_traces(total, av_multi, grid, window)
    r_l, r_r = extract_av_traces(mb.final.rho[0], av_mb, grid, window)
    traces = mb_traces(limit, av0.schedule(t_final))
    if av_mb.constraint_active:
        ordering = "holds" if _ordering([r_l, tot_l, tot_r, r_r], margin) else "fails"
    else:
        ordering = "n/a"
    speeds = [rec.realized_speed for rec in multi.av_history[1:]]
    report = StudyReport("mb-comparison", ["ic", "tau", "dx", "t"])
    report.add(ic=name, tau=cfg.tau, dx=grid.dx, t=t_final,
               lane_left=lane_l, lane_right=lane_r, total_left=tot_l, total_right=tot_r,
               mb_left=r_l, mb_right=r_r, r_hat=traces.r_hat, r_check=traces.r_check,
               multi_active=int(av_multi.constraint_active), mb_active=int(av_mb.constraint_active),
               ordering=ordering, y_multi=av_multi.y, y_mb=av_mb.y,
               min_speed=float(min(speeds)), final_speed=av_multi.realized_speed,
               desired_speed=av0.schedule(t_final), runtime_s=elapsed)
    report.series.update(x=grid.centers, total=total, mb=mb.final.rho[0].copy(),
                         lane1=multi.final.rho[0].copy(), lane2=multi.final.rho[1].copy())
    return report


def _restrict(fine: np.ndarray, factor: int) -> np.ndarray:
    return fine.reshape(-1, factor).mean(axis=1)


def convergence_study(cfg: ScenarioConfig | str, dxs: Sequence[float], t_final: float | None = None
                      ) -> StudyReport:
    """Self-convergence: L1 gap between each resolution and the next finer one, and observed order."""
    cfg = builtin_scenario(cfg) if isinstance(cfg, str) else cfg
    dxs = list(dxs)
    if len(dxs) < 2:
        raise ValueError("need at least two resolutions")
    t_final = cfg.t_final if t_final is None else t_final
    totals, grids = [], []
    for dx in dxs:
        c = with_grid(cfg, dx=dx)
        res = run(c.initial_state(), c.grid, c.lanes, c.coupling, c.tau, t_final, keep_diagnostics=False)
        totals.append(total_density(res.final))
        grids.append(c.grid)
    gaps = []
    for k in range(len(dxs) - 1):
        factor = grids[k + 1].n_cells // grids[k].n_cells
        if factor * grids[k].n_cells != grids[k + 1].n_cells:
            raise ValueError("resolutions must be nested")
        gaps.append(l1_distance(totals[k], _restrict(totals[k + 1], factor), grids[k].dx))
    report = StudyReport("convergence", ["scenario", "dx", "l1_gap", "l1_gap_next", "rate"])
    for k in range(len(gaps) - 1):
        row = dict(scenario=cfg.name, dx=grids[k].dx, l1_gap=gaps[k], l1_gap_next=gaps[k + 1])
        if gaps[k] > 0 and gaps[k + 1] > 0:
            row["rate"] = math.log(gaps[k] / gaps[k + 1]) / math.log(grids[k].dx / grids[k + 1].dx)
        report.add(**row)
    return report


def mass_drift(result: RunResult, initial: MultiLaneState, dx: float) -> float:
    """Largest relative change of the total mass over a run."""
    m0 = float(initial.rho.sum() * dx)
    worst = max((abs(float(d.mass_per_lane.sum()) - m0) for d in result.diagnostics), default=0.0)
    return worst / m0 if m0 else worst
