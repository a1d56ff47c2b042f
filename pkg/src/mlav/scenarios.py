"""Scenario configuration: the text format, validation and the built-in catalog.

A scenario file is made of ``[section]`` headers followed by ``key = value``
lines; ``#`` starts a comment. Lanes and AVs are numbered from 1 in files and
from 0 in the Python API. Example::

    [lanes]
    V = 50, 80, 100
    R = 1, 1, 1

    [grid]
    x_min = 0
    x_max = 10
    n_cells = 500          # or: dx = 0.02
    boundary = zero-gradient

    [source]
    tau = 0.05

    [ic]
    lane1 = sin 0.5 0.5 0.5    # 0.5 + 0.5 sin(0.5 pi x)
    lane2 = cos 0.5 0.5 0.5
    lane3 = constant 0.3

    [avs]
    av1 = lane=1 y0=1 u=30
    av2 = lane=2 y0=2 u=30,10 breaks=0.05

    [run]
    name = example
    t_final = 0.1
    outputs = 0, 0.05, 0.1
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .model import LaneSpec, SourceCoupling
from .multilane import AvState, Boundary, ConfigError, GridSpec, MultiLaneState, Schedule

SECTIONS = {
    "lanes": {"V", "R"},
    "grid": {"x_min", "x_max", "n_cells", "dx", "boundary"},
    "source": {"tau", "lipschitz"},
    "ic": None,  # lane1, lane2, ...
    "avs": None,  # av1, av2, ...
    "run": {"name", "t_final", "outputs"},
}
PROFILE_KINDS = ("constant", "sin", "cos")


@dataclass(frozen=True)
class Profile:
    """Initial density ``a`` (constant) or ``a + b * sin(omega pi x)`` / ``a + b * cos(omega pi x)``."""

    kind: str
    a: float
    b: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ConfigError(f"unknown profile {self.kind!r}, expected one of {PROFILE_KINDS}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.a)
        trig = np.sin if self.kind == "sin" else np.cos
        return self.a + self.b * trig(self.omega * np.pi * x)

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "constant":
            return self.a, self.a
        return self.a - abs(self.b), self.a + abs(self.b)

    def to_text(self) -> str:
        if self.kind == "constant":
            return f"constant {self.a!r}"
        return f"{self.kind} {self.a!r} {self.b!r} {self.omega!r}"


@dataclass(frozen=True)
class AvConfig:
    lane: int
    y0: float
    schedule: Schedule

    def to_text(self) -> str:
        text = f"lane={self.lane + 1} y0={self.y0!r} u={','.join(repr(v) for v in self.schedule.values)}"
        if self.schedule.breakpoints:
            text += " breaks=" + ",".join(repr(b) for b in self.schedule.breakpoints)
        return text


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    lanes: tuple[LaneSpec, ...]
    tau: float
    grid: GridSpec
    t_final: float
    ics: tuple[Profile, ...]
    avs: tuple[AvConfig, ...] = ()
    outputs: tuple[float, ...] = ()
    lipschitz: float | None = None

    def __post_init__(self):
        for name in ("lanes", "ics", "avs", "outputs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        validate_config(self)

    @property
    def coupling(self) -> SourceCoupling:
        return SourceCoupling(self.lanes, self.lipschitz)

    def initial_state(self) -> MultiLaneState:
        rho = np.array([self.grid.cell_averages(p) for p in self.ics])
        for j, spec in enumerate(self.lanes):
            np.clip(rho[j], 0.0, spec.R, out=rho[j])
        avs = [AvState(a.lane, a.y0, a.schedule) for a in self.avs]
        return MultiLaneState(0.0, rho, avs)


def validate_config(cfg: ScenarioConfig) -> None:
    if not cfg.lanes:
        raise ConfigError("missing [lanes]")
    if len(cfg.ics) != len(cfg.lanes):
        raise ConfigError(f"{len(cfg.lanes)} lanes but {len(cfg.ics)} initial profiles")
    if not cfg.tau > 0:
        raise ConfigError(f"tau must be positive, got {cfg.tau}")
    if not (cfg.t_final >= 0 and math.isfinite(cfg.t_final)):
        raise ConfigError(f"invalid t_final {cfg.t_final}")
    for j, (spec, prof) in enumerate(zip(cfg.lanes, cfg.ics)):
        lo, hi = prof.bounds
        if lo < 0 or hi > spec.R:
            raise ConfigError(f"initial profile of lane {j + 1} leaves [0, {spec.R}]")
    for i, av in enumerate(cfg.avs):
        if not 0 <= av.lane < len(cfg.lanes):
            raise ConfigError(f"av{i + 1} refers to missing lane {av.lane + 1}")
        if not cfg.grid.x_min <= av.y0 <= cfg.grid.x_max:
            raise ConfigError(f"av{i + 1} starts outside the grid at y0={av.y0}")
        V = cfg.lanes[av.lane].V
        if av.schedule.min_value < 0 or av.schedule.max_value > V:
            raise ConfigError(f"av{i + 1} desired speed outside [0, {V}]")
    for t in cfg.outputs:
        if not 0 <= t <= cfg.t_final:
            raise ConfigError(f"output time {t} outside [0, {cfg.t_final}]")


def _floats(text: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"line {lineno}: expected numbers, got {text!r}") from None


def _one_float(text: str, lineno: int) -> float:
    values = _floats(text, lineno)
    if len(values) != 1:
        raise ConfigError(f"line {lineno}: expected a single number, got {text!r}")
    return values[0]


def _parse_profile(text: str, lineno: int) -> Profile:
    kind, *rest = text.split()
    nums = _floats(" ".join(rest), lineno)
    expected = 1 if kind == "constant" else 3
    if kind not in PROFILE_KINDS or len(nums) != expected:
        raise ConfigError(f"line {lineno}: profile must be 'constant c', 'sin a b w' or 'cos a b w', got {text!r}")
    return Profile(kind, *nums)


def _parse_av(text: str, lineno: int) -> AvConfig:
    fields = {}
    for tok in text.split():
        key, sep, value = tok.partition("=")
        if not sep or key not in {"lane", "y0", "u", "breaks"}:
            raise ConfigError(f"line {lineno}: bad AV field {tok!r}")
        fields[key] = value
    missing = {"lane", "y0", "u"} - fields.keys()
    if missing:
        raise ConfigError(f"line {lineno}: AV is missing {', '.join(sorted(missing))}")
    try:
        lane = int(fields["lane"]) - 1
    except ValueError:
        raise ConfigError(f"line {lineno}: lane must be an integer") from None
    values = _floats(fields["u"], lineno)
    breaks = _floats(fields.get("breaks", ""), lineno)
    try:
        schedule = Schedule(tuple(values), tuple(breaks))
    except ConfigError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from None
    return AvConfig(lane, _one_float(fields["y0"], lineno), schedule)


def _sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    out: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            if current in out:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            out[current] = {}
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: key outside of any section")
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        allowed = SECTIONS[current]
        if allowed is not None and key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{current}]")
        if key in out[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[current][key] = (value, lineno)
    return out


def _numbered(section: dict[str, tuple[str, int]], prefix: str, where: str) -> list[tuple[str, int]]:
    items = {}
    for key, (value, lineno) in section.items():
        if not (key.startswith(prefix) and key[len(prefix):].isdigit()):
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{where}]")
        items[int(key[len(prefix):])] = (value, lineno)
    if sorted(items) != list(range(1, len(items) + 1)):
        raise ConfigError(f"[{where}] entries must be numbered {prefix}1, {prefix}2, ... without gaps")
    return [items[k] for k in sorted(items)]


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario description."""
    sec = _sections(text)
    for required in ("lanes", "grid", "source", "ic", "run"):
        if required not in sec:
            raise ConfigError(f"missing [{required}]")

    def need(section: str, key: str) -> tuple[str, int]:
        if key not in sec[section]:
            raise ConfigError(f"missing key {key!r} in [{section}]")
        return sec[section][key]

    vs, ln_v = need("lanes", "V")
    rs, ln_r = need("lanes", "R")
    V, R = _floats(vs, ln_v), _floats(rs, ln_r)
    if len(V) != len(R) or not V:
        raise ConfigError(f"line {ln_r}: V and R must list the same, nonzero number of lanes")
    try:
        lanes = tuple(LaneSpec(v, r) for v, r in zip(V, R))
    except ValueError as exc:
        raise ConfigError(f"line {ln_v}: {exc}") from None

    g = sec["grid"]
    x_min = _one_float(*need("grid", "x_min"))
    x_max = _one_float(*need("grid", "x_max"))
    if "n_cells" in g and "dx" in g:
        raise ConfigError(f"line {g['dx'][1]}: give either n_cells or dx, not both")
    if "n_cells" in g:
        value, ln = g["n_cells"]
        try:
            n_cells = int(value)
        except ValueError:
            raise ConfigError(f"line {ln}: n_cells must be an integer") from None
    elif "dx" in g:
        dx = _one_float(*g["dx"])
        if not dx > 0:
            raise ConfigError(f"line {g['dx'][1]}: dx must be positive")
        n_cells = max(1, int(round((x_max - x_min) / dx)))
    else:
        raise ConfigError("missing key 'n_cells' (or 'dx') in [grid]")
    boundary, ln_b = g.get("boundary", (Boundary.ZERO_GRADIENT.value, 0))
    try:
        grid = GridSpec(x_min, x_max, n_cells, Boundary(boundary))
    except ValueError as exc:
        raise ConfigError(f"line {ln_b or g['x_max'][1]}: {exc}") from None

    tau = _one_float(*need("source", "tau"))
    lipschitz = _one_float(*sec["source"]["lipschitz"]) if "lipschitz" in sec["source"] else None

    ic_lines = _numbered(sec["ic"], "lane", "ic")
    if len(ic_lines) != len(lanes):
        raise ConfigError(f"[ic] lists {len(ic_lines)} profiles for {len(lanes)} lanes")
    ics = []
    for (value, ln), spec in zip(ic_lines, lanes):
        prof = _parse_profile(value, ln)
        lo, hi = prof.bounds
        if lo < 0 or hi > spec.R:
            raise ConfigError(f"line {ln}: profile range [{lo}, {hi}] leaves [0, {spec.R}]")
        ics.append(prof)
    avs = []
    for value, ln in _numbered(sec.get("avs", {}), "av", "avs"):
        av = _parse_av(value, ln)
        if not 0 <= av.lane < len(lanes):
            raise ConfigError(f"line {ln}: lane {av.lane + 1} does not exist")
        if not grid.x_min <= av.y0 <= grid.x_max:
            raise ConfigError(f"line {ln}: y0={av.y0} outside [{grid.x_min}, {grid.x_max}]")
        V = lanes[av.lane].V
        if av.schedule.min_value < 0 or av.schedule.max_value > V:
            raise ConfigError(f"line {ln}: desired speed outside [0, {V}] of lane {av.lane + 1}")
        avs.append(av)

    name = sec["run"].get("name", ("scenario", 0))[0]
    t_final = _one_float(*need("run", "t_final"))
    outputs = tuple(_floats(*sec["run"]["outputs"])) if "outputs" in sec["run"] else ()
    return ScenarioConfig(name, lanes, tau, grid, t_final, ics, avs, outputs, lipschitz)


def _join(values) -> str:
    return ", ".join(repr(float(v)) for v in values)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Text form of ``cfg``; ``parse_config`` reads it back to an equal config."""
    lines = [
        "[lanes]",
        f"V = {_join(s.V for s in cfg.lanes)}",
        f"R = {_join(s.R for s in cfg.lanes)}",
        "",
        "[grid]",
        f"x_min = {cfg.grid.x_min!r}",
        f"x_max = {cfg.grid.x_max!r}",
        f"n_cells = {cfg.grid.n_cells}",
        f"boundary = {cfg.grid.boundary.value}",
        "",
        "[source]",
        f"tau = {cfg.tau!r}",
    ]
    if cfg.lipschitz is not None:
        lines.append(f"lipschitz = {cfg.lipschitz!r}")
    lines += ["", "[ic]"] + [f"lane{j + 1} = {p.to_text()}" for j, p in enumerate(cfg.ics)]
    if cfg.avs:
        lines += ["", "[avs]"] + [f"av{i + 1} = {a.to_text()}" for i, a in enumerate(cfg.avs)]
    lines += ["", "[run]", f"name = {cfg.name}", f"t_final = {cfg.t_final!r}"]
    if cfg.outputs:
        lines.append(f"outputs = {_join(cfg.outputs)}")
    return "\n".join(lines) + "\n"


def with_grid(cfg: ScenarioConfig, dx: float | None = None, n_cells: int | None = None) -> ScenarioConfig:
    g = cfg.grid
    if dx is not None:
        n_cells = max(1, int(round((g.x_max - g.x_min) / dx)))
    if n_cells is None:
        return cfg
    return replace(cfg, grid=GridSpec(g.x_min, g.x_max, n_cells, g.boundary))


def single_lane(cfg: ScenarioConfig, lane: int = 0) -> ScenarioConfig:
    """The scenario restricted to one lane, without AVs (so without any source)."""
    return replace(cfg, name=f"{cfg.name}-lane{lane + 1}", lanes=(cfg.lanes[lane],), ics=(cfg.ics[lane],),
                   avs=(), lipschitz=None)


# -- built-in catalog -------------------------------------------------------

_OSCILLATING = (Profile("sin", 0.5, 0.5, 0.5), Profile("cos", 0.5, 0.5, 0.5), Profile("sin", 0.5, 0.5, 1.0))
_ROAD = GridSpec(0.0, 10.0, 500)  # dx = 0.02 km
MB_DENSITIES = {"mb-ic1": 0.05, "mb-ic2": 0.15, "mb-ic3": 0.3, "mb-ic4": 0.45, "mb-ic5": 0.75}
MB_GRID = GridSpec(0.0, 4.0, 800)
MB_Y0 = 1.0


def _threelane() -> ScenarioConfig:
    lanes = tuple(LaneSpec(v, 1.0) for v in (50.0, 80.0, 100.0))
    avs = tuple(AvConfig(j, float(j + 1), Schedule.constant(30.0)) for j in range(3))
    outputs = tuple(round(0.005 * k, 10) for k in range(21))
    return ScenarioConfig("threelane", lanes, 0.05, _ROAD, 0.1, _OSCILLATING, avs, outputs)


def _relax(name: str, speeds) -> ScenarioConfig:
    lanes = tuple(LaneSpec(v, 1.0) for v in speeds)
    return ScenarioConfig(name, lanes, 0.1, _ROAD, 1.0 / 60.0, _OSCILLATING, (), (0.0, 1.0 / 60.0))


def _mb(name: str) -> ScenarioConfig:
    rho0 = MB_DENSITIES[name]
    lane = LaneSpec(2.0, 1.0)
    av = AvConfig(0, MB_Y0, Schedule.constant(1.0))
    return ScenarioConfig(name, (lane, lane), 0.01, MB_GRID, 2.0, (Profile("constant", rho0),) * 2, (av,),
                          (0.0, 1.0, 2.0))


CATALOG = {
    "threelane": _threelane,
    "relax-c1": lambda: _relax("relax-c1", (80.0, 80.0, 80.0)),
    "relax-c2": lambda: _relax("relax-c2", (60.0, 80.0, 100.0)),
    **{name: (lambda n=name: _mb(n)) for name in MB_DENSITIES},
}


def builtin_scenario(name: str) -> ScenarioConfig:
    try:
        return CATALOG[name]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(CATALOG)}") from None


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """A catalog name or the path of a scenario file."""
    if name_or_path in CATALOG:
        return builtin_scenario(name_or_path)
    path = Path(name_or_path)
    if not path.is_file():
        raise ConfigError(f"{name_or_path!r} is neither a built-in scenario nor a readable file")
    return parse_config(path.read_text())
