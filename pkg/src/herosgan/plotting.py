"""Figure rendering for evaluation and Allan reports (PNG files, non-interactive)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.0,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
    # keep PNG bytes stable between runs
    "svg.hashsalt": "herosgan",
}

COLORS = {"ref": "0.2", "input": "tab:red", "enhanced": "tab:blue"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_allan(report, path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        keep = np.asarray(report.adev) > 0
        ax.loglog(np.asarray(report.taus)[keep], np.asarray(report.adev)[keep], "o-", ms=3, label="adev")
        for name, style in (("qn", ":"), ("vrw", "--")):
            fit = report.fits.get(name)
            if fit:
                lo, hi = fit["tau_range"]
                t = np.logspace(np.log10(lo), np.log10(hi), 10)
                slope = -1.0 if name == "qn" else -0.5
                ref_tau = np.sqrt(3.0) if name == "qn" else 1.0
                ax.loglog(t, getattr(report, name) * (t / ref_tau) ** slope, style, label=f"{name.upper()} fit")
        if report.bi > 0:
            ax.axhline(report.bi * 0.664, color="0.5", lw=0.8, label="BI floor")
        ax.set_xlabel("tau [s]")
        ax.set_ylabel("Allan deviation [g]")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_episode(dt: float, ref, inp, enhanced, path, axis: int = 0, title: str = "") -> Path:
    """Overlay of reference, degraded input, and enhanced trace for one axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 2.6))
        t = np.arange(len(ref[axis])) * dt
        ax.plot(t, ref[axis], color=COLORS["ref"], label="reference")
        if inp is not None:
            ax.plot(t, inp[axis], color=COLORS["input"], alpha=0.7, label="input")
        ax.plot(t, enhanced[axis], color=COLORS["enhanced"], alpha=0.8, label="enhanced")
        ax.set_xlabel("time [s]")
        ax.set_ylabel("acceleration [g]")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", ncol=3)
        return _save(fig, path)


def plot_metric_bars(names, before, after, path, ylabel: str, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.35 * len(names) + 2), 2.8))
        x = np.arange(len(names))
        w = 0.4
        if before is not None:
            ax.bar(x - w / 2, before, w, color=COLORS["input"], label="input")
        ax.bar(x + (w / 2 if before is not None else 0), after, w, color=COLORS["enhanced"], label="enhanced")
        ax.set_xticks(x, [n.removesuffix(".csv") for n in names], rotation=60, ha="right")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)
