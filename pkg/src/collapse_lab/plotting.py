"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG bytes stable across runs
_PNG_META = {"Software": None}


def _style(ax, xlabel, ylabel, title=None):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, lw=0.5)


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_matter_snapshots(snapshots, path, regions=()):
    """``snapshots`` is a list of ``(t, axis, density)``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    cmap = plt.get_cmap("viridis")
    n = max(len(snapshots) - 1, 1)
    for k, (t, x, m) in enumerate(snapshots):
        ax.plot(x, m, color=cmap(k / n), lw=1.0, label=f"t={t:.3g}" if k in (0, len(snapshots) - 1) else None)
    for a, b in regions:
        ax.axvspan(a, b, color="0.85", zorder=0)
    _style(ax, "x", "m(x)", "matter density")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_matter_log(snapshot, path):
    """Log-scale view of one snapshot: shows the tails."""
    t, x, m = snapshot
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.semilogy(x, np.maximum(m, 1e-300), lw=1.0)
    ax.set_ylim(bottom=max(1e-30, float(np.min(m[m > 0])) if np.any(m > 0) else 1e-30))
    _style(ax, "x", "m(x)", f"matter density tails, t={t:.3g}")
    return _save(fig, path)


def plot_flashes(flashes, path, t_final=None):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    if flashes:
        ts, xs = zip(*flashes)
        ax.scatter(xs, ts, s=8, color="k")
    if t_final:
        ax.set_ylim(0, t_final)
    _style(ax, "x", "t", "flashes")
    return _save(fig, path)


def plot_weight_trace(times, weights, path):
    """``weights`` is ``(times, regions)`` for one replica."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for j in range(weights.shape[1]):
        ax.plot(times, weights[:, j], lw=1.0, label=f"region {j + 1}")
    ax.set_ylim(-0.02, 1.02)
    _style(ax, "t", "branch weight")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_trajectories(times, positions, path, max_lines=200):
    """``positions`` is ``(times, n, N)``; draws particle 1 of up to ``max_lines`` trajectories."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for j in range(min(positions.shape[1], max_lines)):
        ax.plot(positions[:, j, 0], times, lw=0.5, color="C0", alpha=0.6)
    _style(ax, "Q_1", "t", "Bohmian trajectories")
    return _save(fig, path)


def plot_decoherence(curves, path):
    """``curves`` is a list of ``(label, times, coherence, rate)``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for k, (label, t, c, rate) in enumerate(curves):
        ax.semilogy(t, c, "o", ms=3, color=f"C{k}", label=f"{label}: rate {rate:.3g}")
        if np.isfinite(rate):
            ax.semilogy(t, np.exp(-rate * np.asarray(t)), "-", lw=0.8, color=f"C{k}")
    _style(ax, "t", "|rho(q_L, q_R)| (normalized)", "ensemble coherence")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_scan_summary(levels, rates, jumps, path):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    a1.plot(levels, rates, "o-")
    a1.set_xscale("log", base=2)
    _style(a1, "level k", "fitted decay rate")
    a2.plot(levels, jumps, "s-", color="C3")
    a2.set_xscale("log", base=2)
    _style(a2, "level k", "max per-hit weight jump")
    return _save(fig, path)
