"""Figure rendering for bench reports.

The bench CSV is the primary artifact; these figures are rendered next
to it so a run is inspectable without a separate plotting step.  Only
the bench path draws figures — the metrics/test/interval commands emit
delimited or JSON documents for external tools.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import BenchResult


def render_bench_figures(result: BenchResult, outdir) -> list[Path]:
    """Write iteration and performance figures; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [
        _iterations_figure(result, outdir / "iterations.png"),
        _performance_figure(result, outdir / "performance.png"),
    ]
    return [p for p in paths if p is not None]


def _iterations_figure(result: BenchResult, path: Path) -> Path | None:
    methods = [row["method"] for row in result.rows]
    if not methods:
        return None
    fig, (ax_bar, ax_box) = plt.subplots(1, 2, figsize=(9, 3.6))

    x = np.arange(len(methods))
    width = 0.27
    for offset, key, label in (
        (-width, "iters_inner", "inner"),
        (0.0, "iters_outer", "outer"),
        (width, "iters_total", "total"),
    ):
        vals = [max(row[key], 1e-2) for row in result.rows]
        ax_bar.bar(x + offset, vals, width=width, label=label)
    ax_bar.set_yscale("log")
    ax_bar.set_xticks(x)
    ax_bar.set_xticklabels(methods)
    ax_bar.set_ylabel("iterations per acceptable assignment")
    ax_bar.legend(frameon=False, fontsize=8)

    samples = [result.iteration_samples.get(m, np.array([1.0])) for m in methods]
    samples = [np.maximum(s, 1e-2) for s in samples]
    ax_box.boxplot(samples, tick_labels=methods, showfliers=False)
    ax_box.set_yscale("log")
    ax_box.set_ylabel("total iterations (per draw)")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _performance_figure(result: BenchResult, path: Path) -> Path | None:
    methods = [row["method"] for row in result.rows]
    if not methods:
        return None
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2))
    panels = (
        ("sd", "SD of estimate"),
        ("power", "power at the configured effect"),
        ("t_sample", "seconds per 1000 draws"),
    )
    x = np.arange(len(methods))
    for ax, (key, label) in zip(axes, panels):
        ax.bar(x, [row[key] for row in result.rows], width=0.6, color="#4878a8")
        ax.set_xticks(x)
        ax.set_xticklabels(methods)
        ax.set_ylabel(label)
        if key == "t_sample":
            ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
