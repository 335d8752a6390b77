"""Static SVG figures: sweeps, timings, single events, Pareto fronts."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  pylint: disable=C0413
import numpy as np  # noqa: E402  pylint: disable=C0413

from ..detector import DetectorGeometry  # noqa: E402  pylint: disable=C0413
from ..graphbuild import EventGraph  # noqa: E402  pylint: disable=C0413
from ..simgen import NOISE_TRUTH_ID, Event  # noqa: E402  pylint: disable=C0413
from .metrics import SweepCurve  # noqa: E402  pylint: disable=C0413


def _save(fig, path: Union[Path, str]) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep(
    curve: SweepCurve,
    path: Union[Path, str],
    baseline: Optional[tuple[float, float]] = None,
) -> None:
    """Efficiency and purity against the score threshold.

    `baseline` is an (efficiency, purity) pair drawn as horizontal lines.
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve.thresholds, curve.efficiency, label="efficiency")
    ax.plot(curve.thresholds, curve.purity, label="purity")
    if baseline is not None:
        ax.axhline(baseline[0], ls="--", c="C0", lw=0.8, label="traditional efficiency")
        ax.axhline(baseline[1], ls="--", c="C1", lw=0.8, label="traditional purity")
    ax.set_xlabel("score threshold")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower left")
    _save(fig, path)


def plot_timing(report, path: Union[Path, str]) -> None:
    """Per-event time against batch size, log-log, one line per stage."""
    fig, ax = plt.subplots(figsize=(6, 4))
    b = np.asarray(report.batch_sizes)
    for stage in ("build", "infer", "total"):
        ax.errorbar(
            b, report.mean(stage) * 1e6, yerr=report.spread(stage) * 1e6,
            marker="o", capsize=2, label=stage,
        )
    if report.traditional is not None:
        ax.axhline(report.traditional.mean() * 1e6, ls="--", c="k", lw=0.8, label="traditional")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("batch size (events)")
    ax.set_ylabel("time per event (us)")
    ax.legend()
    _save(fig, path)


def plot_event(
    ev: Event,
    geom: DetectorGeometry,
    path: Union[Path, str],
    g: Optional[EventGraph] = None,
    scores: Optional[np.ndarray] = None,
    threshold: float = 0.5,
) -> None:
    """Transverse view of one event; kept edges drawn when a graph is given."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for r in (geom.active_radius_min, geom.active_radius_max):
        ax.add_patch(plt.Circle((0.0, 0.0), r, fill=False, ls=":", lw=0.6, color="grey"))
    if g is not None and g.n_edges:
        keep = np.ones(g.n_edges, bool) if scores is None else np.asarray(scores) >= threshold
        pos = {hid: (h.x, h.y) for hid, h in ((h.hit_id, h) for h in ev.hits)}
        for a, b in g.E[keep]:
            xa, ya = pos[int(g.node_hit_id[a])]
            xb, yb = pos[int(g.node_hit_id[b])]
            ax.plot([xa, xb], [ya, yb], c="0.6", lw=0.5, zorder=1)
    truth = np.array([h.truth_id for h in ev.hits])
    x = np.array([h.x for h in ev.hits])
    y = np.array([h.y for h in ev.hits])
    noise = truth == NOISE_TRUTH_ID
    ax.scatter(x[~noise], y[~noise], c=truth[~noise], cmap="tab10", s=8, zorder=2)
    ax.scatter(x[noise], y[noise], c="k", marker="x", s=10, zorder=2, label="noise")
    lim = geom.active_radius_max * 1.05
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_xlabel("x (cm)")
    ax.set_ylabel("y (cm)")
    ax.set_title(f"event {ev.event_id}")
    _save(fig, path)


def plot_pareto(
    objectives: np.ndarray,
    path: Union[Path, str],
    chosen: Optional[tuple[float, float]] = None,
) -> None:
    """Archive objectives (efficiency, purity), chosen point highlighted."""
    fig, ax = plt.subplots(figsize=(5, 4))
    P = np.asarray(objectives).reshape(-1, 2)
    order = np.argsort(P[:, 0])
    ax.plot(P[order, 0], P[order, 1], marker="o", ms=3, lw=0.8)
    if chosen is not None:
        ax.scatter([chosen[0]], [chosen[1]], c="r", zorder=3, label="chosen")
        ax.legend()
    ax.set_xlabel("efficiency")
    ax.set_ylabel("purity")
    _save(fig, path)


def plot_hypervolume(history: Sequence[float], path: Union[Path, str]) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(np.arange(1, len(history) + 1), history, marker="o", ms=3)
    ax.set_xlabel("generation")
    ax.set_ylabel("hypervolume")
    _save(fig, path)
