"""Figure rendering for the report paths of the command line tool.

Every simulate or sweep invocation can drop a PNG next to its CSV so a
run is inspectable without a separate plotting step.  The figures are
deliberately plain: the CSV remains the artifact of record, the image
is the quick look.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .model import TraceRecord
from .sim import EnsembleStats

__all__ = [
    "render_ensemble_figure",
    "render_trajectory_figure",
    "render_sweep_figure",
]


def render_ensemble_figure(stats: EnsembleStats, path: str) -> None:
    '''Ensemble mean of the squared state against the envelope, plus the
    running transmission fraction.'''
    k = np.arange(len(stats.mean_x2))
    fig, (ax_top, ax_bot) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True,
        gridspec_kw={"height_ratios": [2.2, 1.0]})

    ax_top.semilogy(k, stats.mean_x2, label="mean squared state", lw=1.4)
    ax_top.semilogy(k, stats.bound, label="objective envelope", lw=1.2, ls="--")
    ax_top.set_ylabel("second moment")
    ax_top.legend(loc="upper right", frameon=False)
    ax_top.set_title(f"ensemble of {stats.n_runs} runs")

    ax_bot.plot(k, stats.frac, lw=1.2, color="tab:green")
    ax_bot.set_ylim(0.0, 1.0)
    ax_bot.set_xlabel("step")
    ax_bot.set_ylabel("transmission fraction")

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_trajectory_figure(trace: list[TraceRecord], path: str) -> None:
    """Single-run view: squared state against its own envelope (recovered
    from the gap column), with transmission and reception events marked."""
    k = np.array([rec.k for rec in trace])
    x_sq = np.array([_sq(rec.x) for rec in trace])
    envelope = x_sq - np.array([rec.h for rec in trace])
    t = np.array([rec.t for rec in trace], dtype=bool)
    r = np.array([rec.r for rec in trace], dtype=bool)

    fig, (ax_top, ax_ev) = plt.subplots(
        2, 1, figsize=(7.0, 5.4), sharex=True,
        gridspec_kw={"height_ratios": [3.0, 0.8]})

    ax_top.semilogy(k, x_sq, label="squared state", lw=1.3)
    ax_top.semilogy(k, envelope, label="running envelope", lw=1.1, ls="--")
    ax_top.set_ylabel("second moment")
    ax_top.legend(loc="upper right", frameon=False)

    ax_ev.scatter(k[t], np.full(t.sum(), 1.0), marker="|", s=90,
                  color="tab:blue", label="transmit")
    ax_ev.scatter(k[r], np.full(r.sum(), 0.0), marker="|", s=90,
                  color="tab:green", label="receive")
    ax_ev.set_yticks([0.0, 1.0], ["receive", "transmit"])
    ax_ev.set_ylim(-0.6, 1.6)
    ax_ev.set_xlabel("step")

    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_sweep_figure(values: list[float], tail_fracs: list[float],
                        param: str, path: str) -> None:
    '''Tail transmission fraction across the swept parameter values.'''
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(values, tail_fracs, marker="o", lw=1.3)
    ax.set_xlabel(param)
    ax.set_ylabel("tail transmission fraction")
    ax.set_ylim(bottom=0.0)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _sq(x) -> float:
    arr = np.asarray(x, dtype=float)
    return float(arr @ arr) if arr.ndim else float(arr) ** 2
