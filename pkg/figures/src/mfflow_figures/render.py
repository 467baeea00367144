"""Figure builders and the render entry point.

All styling is fixed and the PNG writer's version text chunk is
suppressed, so rendering the same inputs twice produces byte-identical
files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .data import FigureDataError, load_table  # noqa: E402

# Dropping the "Software" text chunk removes the only run-varying bytes
# a PNG would otherwise carry.
PNG_METADATA = {"Software": None}


@dataclass(frozen=True)
class FigureSpec:
    """What to render: figure id, run directory with tidy CSVs, output path."""

    figure_id: int
    run_dir: Path
    out_path: Path
    dpi: int = 150
    max_time_panels: int = 6
    max_time_curves: int = 8


def _grouped(keys: list[str], *columns: list[str]) -> dict[str, list[tuple]]:
    groups: dict[str, list[tuple]] = {}
    for key, *values in zip(keys, *columns):
        groups.setdefault(key, []).append(tuple(values))
    return groups


def _pick_evenly(items: list, limit: int) -> list:
    if len(items) <= limit:
        return list(items)
    idx = np.unique(np.linspace(0, len(items) - 1, limit).round().astype(int))
    return [items[i] for i in idx]


def _time_label(t: str) -> str:
    return f"t={float(t):g}"


def build_figure1(run_dir: Path):
    table = load_table(
        run_dir / "figure1_trajectories.csv", ("run-id", "step", "w1", "w2", "method")
    )
    groups = _grouped(
        [f"{r}|{m}" for r, m in zip(table["run-id"], table["method"])],
        table["w1"],
        table["w2"],
    )
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    cmap = plt.get_cmap("tab10")
    color_idx = 0
    for key, points in groups.items():
        run_id, method = key.split("|", 1)
        w1 = [float(p[0]) for p in points]
        w2 = [float(p[1]) for p in points]
        if method == "gd-on-q":
            ax.plot(w1, w2, color="black", linestyle="--", linewidth=2.0,
                    zorder=3, label=f"{method}")
        else:
            ax.plot(w1, w2, color=cmap(color_idx % 10), linewidth=1.0,
                    alpha=0.9, label=f"run {run_id}")
            color_idx += 1
    last = next(reversed(groups.values()))
    ax.plot(float(last[-1][0]), float(last[-1][1]), marker="*", color="black",
            markersize=10, zorder=4)
    ax.set_xlabel("w1")
    ax.set_ylabel("w2")
    ax.set_title("Weight trajectories")
    ax.legend(fontsize=7, ncol=2, loc="best")
    return fig


def build_figure2(run_dir: Path, max_time_curves: int):
    table = load_table(run_dir / "figure2_scan.csv", ("t", "r", "value"))
    groups = _grouped(table["t"], table["r"], table["value"])
    chosen = _pick_evenly(list(groups), max_time_curves)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    cmap = plt.get_cmap("viridis")
    denom = max(len(chosen) - 1, 1)
    for i, t in enumerate(chosen):
        r = [float(p[0]) for p in groups[t]]
        v = [float(p[1]) for p in groups[t]]
        ax.plot(r, v, color=cmap(i / denom), marker="o", markersize=3,
                linewidth=1.2, label=_time_label(t))
    ax.set_xlabel("perpendicular coordinate r")
    ax.set_ylabel("predictor value")
    ax.set_title("Dependence on the perpendicular coordinate")
    ax.legend(fontsize=7)
    return fig


def build_figure3(run_dir: Path, max_time_panels: int):
    hist = load_table(run_dir / "figure3_hist.csv", ("t", "side", "bin-left", "mass"))
    dist = load_table(
        run_dir / "figure3_dist.csv", ("t", "side", "w2-distance", "mass-error")
    )
    by_time = _grouped(hist["t"], hist["side"], hist["bin-left"], hist["mass"])
    chosen = _pick_evenly(list(by_time), max_time_panels)
    ncols = min(3, len(chosen))
    nrows = -(-len(chosen) // ncols)
    fig = plt.figure(figsize=(3.2 * ncols, 2.6 * (nrows + 1)))
    grid = fig.add_gridspec(nrows + 1, ncols, hspace=0.55, wspace=0.35)

    side_style = {"plus": ("tab:blue", 0.8), "minus": ("tab:red", 0.5)}
    for i, t in enumerate(chosen):
        ax = fig.add_subplot(grid[i // ncols, i % ncols])
        rows = by_time[t]
        lefts = sorted({float(r[1]) for r in rows})
        width = (lefts[1] - lefts[0]) if len(lefts) > 1 else np.pi / 4
        for side, (color, alpha) in side_style.items():
            xs = [float(r[1]) for r in rows if r[0] == side]
            ms = [float(r[2]) for r in rows if r[0] == side]
            ax.bar(xs, ms, width=width, align="edge", color=color, alpha=alpha,
                   label=side, linewidth=0)
        ax.set_title(_time_label(t), fontsize=9)
        ax.tick_params(labelsize=7)
        if i == 0:
            ax.legend(fontsize=7)

    ax = fig.add_subplot(grid[nrows, :])
    dist_groups = _grouped(dist["side"], dist["t"], dist["w2-distance"], dist["mass-error"])
    curves = [
        ("plus", 1, "W2 to 0 (plus)", "tab:blue", "-"),
        ("minus", 1, "W2 to pi/2 (minus)", "tab:red", "-"),
        ("plus", 2, "mass error (plus)", "tab:blue", "--"),
        ("minus", 2, "mass error (minus)", "tab:red", "--"),
    ]
    plotted = 0
    for side, col, label, color, style in curves:
        points = [(float(p[0]), float(p[col])) for p in dist_groups.get(side, [])]
        points = [(t, v) for t, v in points if t > 0.0]
        if not points:
            continue
        ax.plot([p[0] for p in points], [p[1] for p in points], color=color,
                linestyle=style, linewidth=1.4, label=label)
        plotted += 1
    if plotted == 0:
        raise FigureDataError(
            "figure3_dist.csv has no rows with t > 0 to place on log-log axes"
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("distance")
    ax.set_title("Mass and position distances", fontsize=10)
    ax.legend(fontsize=7)
    return fig


def render(spec: FigureSpec) -> Path:
    """Build the requested figure and write it; returns the output path.

    The figure is fully built before the output path is touched, so a
    schema error never leaves a partial image behind.
    """
    run_dir = Path(spec.run_dir)
    if spec.figure_id == 1:
        fig = build_figure1(run_dir)
    elif spec.figure_id == 2:
        fig = build_figure2(run_dir, spec.max_time_curves)
    elif spec.figure_id == 3:
        fig = build_figure3(run_dir, spec.max_time_panels)
    else:
        raise FigureDataError(f"figure id must be 1, 2, or 3; got {spec.figure_id!r}")
    out = Path(spec.out_path)
    try:
        fig.savefig(out, dpi=spec.dpi, metadata=PNG_METADATA)
    finally:
        plt.close(fig)
    return out
