"""Figure rendering for the CLI report paths.

Every figure is written next to its CSV counterpart; the CSVs remain the
stable machine-readable interface.  Rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_curves(
    curves: Sequence[tuple[str, np.ndarray, np.ndarray]],
    path: Path | str,
    *,
    xlabel: str,
    ylabel: str,
    title: str = "",
    logy: bool = False,
) -> Path:
    """Overlay labelled (x, y) curves; the workhorse for concentration/risk plots."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, x, y in curves:
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    if len(curves) > 1:
        ax.legend()
    return _save(fig, path)


def plot_validation(report, path: Path | str, *, title: str = "") -> Path:
    """Steady solver profile against the closed form, with relative error."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(report.radii, report.analytic, label="closed form", lw=2)
    ax1.plot(report.radii, report.numeric, "--", label="finite volume")
    ax1.set_ylabel("concentration (droplets/m$^3$)")
    ax1.grid(True, alpha=0.3)
    ax1.legend()
    if title:
        ax1.set_title(title)
    ax2.semilogy(report.radii, np.abs(report.rel_err) + 1e-16)
    ax2.set_xlabel("distance from source (m)")
    ax2.set_ylabel("|relative error|")
    ax2.grid(True, alpha=0.3)
    return _save(fig, path)


def plot_abm_means(statistics, path: Path | str) -> Path:
    """Mean new infections versus mobility, one line per (n, alpha, pc) combination."""
    groups: dict[tuple, list] = {}
    for s in statistics:
        key = (s.config.population, s.config.initially_infected, s.config.patch_contamination_probability)
        groups.setdefault(key, []).append(s)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (n, alpha, pc), stats in sorted(groups.items()):
        stats = sorted(stats, key=lambda s: s.config.mobility)
        mu = [s.config.mobility for s in stats]
        mean = [s.mean for s in stats]
        err = [np.sqrt(s.variance / max(s.replications, 1)) for s in stats]
        ax.errorbar(mu, mean, yerr=err, marker="o", capsize=2, label=f"n={n}, $\\alpha$={alpha}, pc={pc:g}")
    ax.set_xlabel("mobility $\\mu$")
    ax.set_ylabel("mean new infections per shift")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_abm_histograms(statistics, path: Path | str, *, max_panels: int = 12) -> Path:
    """New-infection histograms, one panel per grid point (capped)."""
    stats = list(statistics)[:max_panels]
    cols = min(3, len(stats))
    rows = (len(stats) + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 2.8 * rows), squeeze=False)
    for ax in axes.flat[len(stats) :]:
        ax.set_visible(False)
    for ax, s in zip(axes.flat, stats):
        hist = s.histogram
        ax.bar(np.arange(hist.size), hist, width=0.9)
        c = s.config
        ax.set_title(
            f"$\\mu$={c.mobility:g}, n={c.population}, $\\alpha$={c.initially_infected}, "
            f"pc={c.patch_contamination_probability:g}",
            fontsize=8,
        )
        ax.set_xlabel("new infections", fontsize=8)
        ax.set_ylabel("occurrences", fontsize=8)
        ax.tick_params(labelsize=7)
    return _save(fig, path)


def plot_threshold_times(rows, path: Path | str) -> Path:
    """Contamination threshold time versus source rate, one line per area."""
    by_area: dict[float, list] = {}
    for area, rate, seconds in rows:
        by_area.setdefault(area, []).append((rate, seconds))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for area, points in sorted(by_area.items()):
        points.sort()
        rates = [p[0] for p in points]
        minutes = [p[1] / 60.0 for p in points]
        ax.plot(rates, minutes, marker="o", label=f"A = {area:g} m$^2$")
    ax.set_xlabel("source rate (droplets/s)")
    ax.set_ylabel("threshold time (min)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, path)
