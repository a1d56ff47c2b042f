"""Matplotlib figures written next to the CSV output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import StudyReport  # noqa: E402
from .output import OutputBundle  # noqa: E402


def _trajectories(bundle: OutputBundle) -> dict[tuple[int, int], np.ndarray]:
    paths: dict[tuple[int, int], list] = {}
    for rec in bundle.av_rows:
        paths.setdefault((rec.lane, rec.av_index), []).append((rec.t, rec.y))
    return {k: np.array(v) for k, v in paths.items()}


def _heatmap(ax, x, times, z, title, vmax=None):
    mesh = ax.pcolormesh(x, times, z, shading="nearest", cmap="jet", vmin=0.0, vmax=vmax)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    ax.set_title(title)
    return mesh


def density_figures(bundle: OutputBundle, out_dir, lane_R=None) -> list[Path]:
    """One heat map per lane plus the total density, AV paths drawn in black."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if len(bundle.times) < 2:
        return []
    paths = _trajectories(bundle)
    written = []
    panels = [(f"lane{j + 1}", m, j) for j, m in enumerate(bundle.densities)]
    panels.append(("total", bundle.total, None))
    for name, z, lane in panels:
        fig, ax = plt.subplots(figsize=(6, 4))
        vmax = None if lane is None or lane_R is None else lane_R[lane]
        mesh = _heatmap(ax, bundle.x, bundle.times, z, f"density {name}", vmax)
        fig.colorbar(mesh, ax=ax)
        for (av_lane, _), pts in paths.items():
            if lane is None or av_lane == lane:
                ax.plot(pts[:, 1], pts[:, 0], "k-", lw=1.5)
        ax.set_xlim(bundle.x[0], bundle.x[-1])
        ax.set_ylim(bundle.times[0], bundle.times[-1])
        fig.tight_layout()
        path = out / f"density_{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def profile_figure(report: StudyReport, out_dir, skip=("x",)) -> Path | None:
    """Overlay of every profile stored in ``report.series`` against ``x``."""
    if "x" not in report.series:
        return None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = report.series["x"]
    for name, values in report.series.items():
        if name in skip:
            continue
        style = "k--" if name in ("reference", "mb") else "-"
        ax.plot(x, values, style, lw=1.2, label=name)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.legend(loc="best", fontsize=8)
    ax.set_title(report.name)
    fig.tight_layout()
    path = out / f"profiles_{report.name}.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
