"""Benchmark report output: the CSV table plus rendered summary figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bench import BenchReport, WARPED  # noqa: E402

CSV_COLUMNS = ["sampler", "batch_size", "mode", "seed", "epoch_size",
               "patches_per_sec", "min_rate", "max_rate", "cache_hits",
               "cache_misses", "evictions", "bytes_decoded", "wall_s"]

SAMPLER_COLORS = {"random": "tab:blue", "random-batch": "tab:orange",
                  "grid": "tab:green"}


def write_csv(report: BenchReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow([r.sampler, r.batch_size, r.mode, r.seed,
                             r.epoch_size, f"{r.patches_per_sec:.3f}",
                             f"{r.min_rate:.3f}", f"{r.max_rate:.3f}",
                             r.cache_hits, r.cache_misses, r.evictions,
                             r.bytes_decoded, f"{r.wall_s:.4f}"])


def _styled_axes(ax, xlabel, ylabel):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)


def plot_rate_vs_batch(report: BenchReport, path, mode: str = WARPED) -> bool:
    """Sampling rate vs batch size, one line per sampler.

    Solid line is the mean across seeds; the band spans seed min/max.
    Returns False when the report has no rows for the mode.
    """
    rows = [r for r in report.rows if r.mode == mode]
    if not rows:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    for sampler in sorted({r.sampler for r in rows}):
        batches = sorted({r.batch_size for r in rows if r.sampler == sampler})
        mean, lo, hi = [], [], []
        for b in batches:
            cell = [r.patches_per_sec for r in rows
                    if r.sampler == sampler and r.batch_size == b]
            mean.append(sum(cell) / len(cell))
            lo.append(min(min(r.min_rate for r in rows
                              if r.sampler == sampler and r.batch_size == b),
                          min(cell)))
            hi.append(max(max(r.max_rate for r in rows
                              if r.sampler == sampler and r.batch_size == b),
                          max(cell)))
        color = SAMPLER_COLORS.get(sampler)
        ax.plot(batches, mean, marker="o", label=sampler, color=color)
        ax.fill_between(batches, lo, hi, alpha=0.2, color=color)
    ax.set_xscale("log", base=2)
    _styled_axes(ax, "batch size", "patches / s")
    ax.set_title(f"sampler throughput ({mode})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def plot_mode_comparison(report: BenchReport, path) -> bool:
    """Mean sampling rate per sampler under each data-loading mode."""
    modes = sorted({r.mode for r in report.rows},
                   key=lambda m: (m != WARPED, m))
    samplers = sorted({r.sampler for r in report.rows})
    if not modes or not samplers:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / len(modes)
    for k, mode in enumerate(modes):
        xs, ys = [], []
        for i, sampler in enumerate(samplers):
            cell = [r.patches_per_sec for r in report.rows
                    if r.mode == mode and r.sampler == sampler]
            if not cell:
                continue
            xs.append(i + (k - (len(modes) - 1) / 2) * width)
            ys.append(sum(cell) / len(cell))
        ax.bar(xs, ys, width=width, label=mode)
    ax.set_xticks(range(len(samplers)))
    ax.set_xticklabels(samplers)
    _styled_axes(ax, "sampler", "patches / s")
    ax.set_title("effect of preprocessing on sampling rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return True


def write_report(report: BenchReport, csv_path, figures: bool = True) -> list:
    """CSV always; companion PNG figures rendered next to it by default."""
    csv_path = Path(csv_path)
    write_csv(report, csv_path)
    written = [str(csv_path)]
    if figures:
        base = csv_path.with_suffix("")
        fig1 = Path(f"{base}_rate_vs_batch.png")
        if plot_rate_vs_batch(report, fig1):
            written.append(str(fig1))
        fig2 = Path(f"{base}_modes.png")
        if plot_mode_comparison(report, fig2):
            written.append(str(fig2))
    return written
