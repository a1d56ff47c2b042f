"""Deterministic CSV output for simulation runs and study reports."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .analysis import StudyReport
from .multilane import AvRecord, RunResult

TRAJECTORY_COLUMNS = ("t", "lane", "av_index", "y", "realized_speed", "constraint_active")


def fmt(value) -> str:
    """12 significant digits for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


@dataclass
class OutputBundle:
    x: np.ndarray
    times: list[float]
    densities: list[np.ndarray]  # one (len(times), n_cells) matrix per lane
    av_rows: list[AvRecord]
    reports: dict[str, StudyReport] = field(default_factory=dict)

    @classmethod
    def from_run(cls, result: RunResult, x: np.ndarray, reports: dict[str, StudyReport] | None = None
                 ) -> "OutputBundle":
        times = [s.t for s in result.samples]
        n_lanes = result.final.n_lanes
        if result.samples:
            dens = [np.array([s.rho[j] for s in result.samples]) for j in range(n_lanes)]
        else:
            dens = [np.empty((0, x.size)) for _ in range(n_lanes)]
        return cls(np.asarray(x), times, dens, list(result.av_history), dict(reports or {}))

    @property
    def total(self) -> np.ndarray:
        return np.sum(self.densities, axis=0)


def _write(path: Path, rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _matrix_rows(x: np.ndarray, times: Sequence[float], matrix: np.ndarray) -> list[list]:
    rows: list[list] = [["t\\x", *x.tolist()]]
    rows += [[t, *matrix[i].tolist()] for i, t in enumerate(times)]
    return rows


def report_rows(report: StudyReport) -> list[list]:
    return [list(report.columns)] + [[row.get(c, "") for c in report.columns] for row in report.rows]


def write_outputs(bundle: OutputBundle, out_dir: str | Path) -> list[Path]:
    """Write the bundle as CSV files into ``out_dir`` and return the paths written.

    Density matrices are only written when there is at least one sample time.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    written = []
    if bundle.times:
        for j, matrix in enumerate(bundle.densities):
            path = out / f"density_lane{j + 1}.csv"
            _write(path, _matrix_rows(bundle.x, bundle.times, matrix))
            written.append(path)
        path = out / "total_density.csv"
        _write(path, _matrix_rows(bundle.x, bundle.times, bundle.total))
        written.append(path)
    path = out / "av_trajectories.csv"
    rows = [list(TRAJECTORY_COLUMNS)]
    rows += [[r.t, r.lane + 1, r.av_index + 1, r.y, r.realized_speed, r.constraint_active] for r in bundle.av_rows]
    _write(path, rows)
    written.append(path)
    for name, report in bundle.reports.items():
        path = out / f"report_{name}.csv"
        _write(path, report_rows(report))
        written.append(path)
    return written


def write_report(report: StudyReport, out_dir: str | Path, with_series: bool = True) -> list[Path]:
    """Write a study report and, optionally, its profile series (one column per series)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"report_{report.name}.csv"
    _write(path, report_rows(report))
    written.append(path)
    if with_series and report.series:
        names = list(report.series)
        length = len(report.series[names[0]])
        rows = [names] + [[report.series[n][i] for n in names] for i in range(length)]
        path = out / f"profiles_{report.name}.csv"
        _write(path, rows)
        written.append(path)
    return written


PLOT_SCRIPT = '''"""Heat maps of the density CSV files in this directory, with AV trajectories."""
import csv
import glob
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

here = os.path.dirname(os.path.abspath(__file__))


def load(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    x = np.array(rows[0][1:], dtype=float)
    t = np.array([r[0] for r in rows[1:]], dtype=float)
    z = np.array([r[1:] for r in rows[1:]], dtype=float)
    return x, t, z


traj = {}
with open(os.path.join(here, "av_trajectories.csv")) as fh:
    for row in csv.DictReader(fh):
        traj.setdefault((row["lane"], row["av_index"]), []).append((float(row["t"]), float(row["y"])))

for path in sorted(glob.glob(os.path.join(here, "*density*.csv"))):
    x, t, z = load(path)
    if len(t) < 2:
        continue
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(x, t, z, shading="nearest", cmap="jet")
    fig.colorbar(mesh, ax=ax)
    name = os.path.basename(path)[:-4]
    for (lane, _), pts in traj.items():
        if name.endswith("lane" + lane) or name.startswith("total"):
            pts = np.array(pts)
            ax.plot(pts[:, 1], pts[:, 0], "k-", lw=1.5)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(name)
    fig.tight_layout()
    fig.savefig(os.path.join(here, name + ".png"), dpi=120)
    plt.close(fig)
'''


def emit_plot_script(out_dir: str | Path) -> Path:
    path = Path(out_dir) / "plot_densities.py"
    path.write_text(PLOT_SCRIPT)
    return path
