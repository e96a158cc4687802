"""Figures for the report and cluster subcommands, rendered to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analytics import Clustering, Report  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.hashsalt": "adhocscan",
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    # fixed metadata so repeated renders are byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def _bar(ax, labels: Sequence[str], values: Sequence[float], title: str, xlabel: str) -> None:
    y = np.arange(len(labels))
    ax.barh(y, values, color="0.35")
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.invert_yaxis()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    if not labels:
        ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)


def report_figures(report: Report, records: Sequence[Mapping], out_dir: str | Path) -> list[Path]:
    """Size histograms, top function names and input origins."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
        for ax, name in zip(axes, ("loc", "cyclo")):
            vals = [r[name] for r in records]
            if vals:
                bins = np.arange(min(vals), max(vals) + 2) - 0.5
                ax.hist(vals, bins=bins, color="0.35", edgecolor="white")
            else:
                ax.text(0.5, 0.5, "no data", ha="center", va="center", transform=ax.transAxes)
            ax.set_xlabel(name)
            ax.set_ylabel("parsers")
        axes[0].set_title("parser size (LOC)")
        axes[1].set_title("cyclomatic complexity")
        written.append(_save(fig, out / "sizes.png"))

        fig, ax = plt.subplots()
        names = [nm for nm, _, _ in report.function_names[:15]]
        rates = [rate for _, _, rate in report.function_names[:15]]
        _bar(ax, names, rates, "most common calls", "share of parsers")
        written.append(_save(fig, out / "functions.png"))

        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
        _bar(axes[0], list(report.input_sources), list(report.input_sources.values()),
             "input source", "parsers")
        _bar(axes[1], list(report.input_origins), list(report.input_origins.values()),
             "input origin", "parsers")
        written.append(_save(fig, out / "inputs.png"))
    return written


def _project_2d(x: np.ndarray) -> np.ndarray:
    """First two principal components (zero-padded when fewer exist)."""
    centered = x - x.mean(axis=0)
    if centered.shape[1] == 0 or not np.any(centered):
        return np.zeros((x.shape[0], 2))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    # fix the sign of each component so the picture is reproducible
    for i in range(vt.shape[0]):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
    proj = centered @ vt[:2].T
    if proj.shape[1] < 2:
        proj = np.column_stack([proj, np.zeros(x.shape[0])])
    return proj


def cluster_figures(clustering: Clustering, matrix: np.ndarray, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        pts = _project_2d(np.asarray(matrix, dtype=float))
        labels = np.asarray(clustering.assignments)
        cmap = plt.get_cmap("tab10")
        for j in range(clustering.k):
            sel = labels == j
            ax.scatter(pts[sel, 0], pts[sel, 1], s=14, color=cmap(j % 10), label=f"cluster {j}")
        ax.set_xlabel("PC 1")
        ax.set_ylabel("PC 2")
        ax.set_title(f"k-means, k={clustering.k}, seed={clustering.seed}")
        if clustering.k <= 10:
            ax.legend(frameon=False, fontsize=8)
        written.append(_save(fig, out / "clusters.png"))

        fig, ax = plt.subplots()
        trace = clustering.inertia_trace
        ax.plot(range(1, len(trace) + 1), trace, marker="o", color="0.2")
        ax.set_xlabel("iteration")
        ax.set_ylabel("inertia")
        ax.set_title("Lloyd iterations")
        written.append(_save(fig, out / "inertia.png"))
    return written
