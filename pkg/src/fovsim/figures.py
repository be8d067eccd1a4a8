"""Matplotlib renderers for the evaluation reports (file output only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evalharness import BenchmarkResult, EvalReport  # noqa: E402


def render_stat_error_figure(report: EvalReport, path: str | Path) -> None:
    """Per-image mean/std percent error, sorted highest to lowest."""
    means = [r.stat_err_mean or 0.0 for r in report.records]
    stds = [r.stat_err_std or 0.0 for r in report.records]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(means)), 4))
    xs = range(len(means))
    ax.bar(xs, means, yerr=stds, color="#4878a8", ecolor="#888888", capsize=2)
    ax.set_xlabel("image (sorted by mean error)")
    ax.set_ylabel("statistics percent error")
    ax.set_title("Per-image region-statistics error")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_pixel_figure(report: EvalReport, path: str | Path) -> None:
    pix = [r.pixel_diff_mean or 0.0 for r in report.records]
    fov = [r.fovea_diff_mean or 0.0 for r in report.records]
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(pix)), 4))
    xs = list(range(len(pix)))
    ax.bar([x - 0.2 for x in xs], pix, width=0.4, label="full frame", color="#4878a8")
    ax.bar([x + 0.2 for x in xs], fov, width=0.4, label="fovea", color="#b0654a")
    ax.set_xlabel("image")
    ax.set_ylabel("mean abs pixel difference (0-255)")
    ax.legend()
    ax.set_title("Pixel differences vs reference")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bench_figure(result: BenchmarkResult, path: str | Path) -> None:
    names = list(result.per_backend)
    means = [result.per_backend[n]["mean_seconds"] for n in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, means, color="#4878a8")
    ax.set_yscale("log")
    ax.set_ylabel("seconds per image (log scale)")
    ax.set_title("Foveation backend runtime")
    for i, v in enumerate(means):
        ax.text(i, v, f"{v:.3g}s", ha="center", va="bottom")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
