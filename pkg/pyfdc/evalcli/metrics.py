"""Segment-level efficiency and purity, threshold sweeps and matched-purity lookup."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from pyfdc.exceptions import PreconditionError, ShapeMismatchError

logger = logging.getLogger(__name__)

# (event_id, source_hit, target_hit)
EdgeKey = tuple[int, int, int]


@dataclass(frozen=True)
class SegmentMetrics:
    """Counts behind efficiency and purity.

    Attributes:
        true_kept: truth segments present among the predicted edges.
        true_total: truth segments in the denominator.
        predicted_total: predicted edges.
        predicted_true: predicted edges joining two hits of the same particle.
    """

    true_kept: int
    true_total: int
    predicted_total: int
    predicted_true: int

    @property
    def efficiency(self) -> float:
        return self.true_kept / self.true_total if self.true_total > 0 else 1.0

    @property
    def purity(self) -> float:
        if self.predicted_total == 0:
            return 1.0
        return self.predicted_true / self.predicted_total

    def __add__(self, other: SegmentMetrics) -> SegmentMetrics:
        return SegmentMetrics(
            true_kept=self.true_kept + other.true_kept,
            true_total=self.true_total + other.true_total,
            predicted_total=self.predicted_total + other.predicted_total,
            predicted_true=self.predicted_true + other.predicted_true,
        )

    def as_dict(self) -> dict:
        return {
            "efficiency": self.efficiency,
            "purity": self.purity,
            "true_kept": self.true_kept,
            "true_total": self.true_total,
            "predicted_total": self.predicted_total,
            "predicted_true": self.predicted_true,
        }


def segment_metrics(
    predicted: Iterable[EdgeKey],
    truth: Iterable[EdgeKey],
    same_particle: Optional[dict[tuple[int, int], int]] = None,
) -> SegmentMetrics:
    """Counts predicted edges against the truth segments.

    Args:
        predicted: predicted-true edges as (event_id, source_hit, target_hit).
        truth: truth segments, same keys.
        same_particle: (event_id, hit_id) -> truth_id. A predicted edge whose
            hits share a non-negative truth_id counts as correct for purity even
            when it is not a truth segment. Without it, correctness is truth
            membership.
    """
    pred = set(predicted)
    tru = set(truth)
    kept = len(pred & tru)
    if same_particle is None:
        correct = kept
    else:
        correct = 0
        for ev, a, b in pred:
            ta = same_particle.get((ev, a), -1)
            if ta >= 0 and ta == same_particle.get((ev, b), -1):
                correct += 1
    return SegmentMetrics(
        true_kept=kept, true_total=len(tru), predicted_total=len(pred), predicted_true=correct
    )


def default_grid(n_thresholds: int = 101) -> np.ndarray:
    return np.round(np.linspace(0.0, 1.0, n_thresholds), 12)


@dataclass(frozen=True)
class SweepCurve:
    thresholds: np.ndarray
    metrics: tuple[SegmentMetrics, ...]

    @property
    def efficiency(self) -> np.ndarray:
        return np.array([m.efficiency for m in self.metrics])

    @property
    def purity(self) -> np.ndarray:
        return np.array([m.purity for m in self.metrics])


def threshold_sweep(
    scores: np.ndarray,
    labels: np.ndarray,
    grid: Optional[np.ndarray] = None,
    segment_mask: Optional[np.ndarray] = None,
    n_true_total: Optional[int] = None,
) -> SweepCurve:
    """Metrics at each threshold; an edge is predicted true when score >= threshold.

    Args:
        scores: per-edge scores in [0, 1].
        labels: per-edge same-particle flags (purity truth).
        grid: strictly increasing thresholds in [0, 1]; 101 points by default.
        segment_mask: per-edge truth-segment flags (efficiency truth);
            defaults to `labels`.
        n_true_total: efficiency denominator; defaults to the number of
            flagged edges, so threshold 0 has efficiency 1.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if scores.shape != labels.shape:
        raise ShapeMismatchError("threshold_sweep", labels.shape, scores.shape)
    seg = labels if segment_mask is None else np.asarray(segment_mask, dtype=bool).ravel()
    if seg.shape != scores.shape:
        raise ShapeMismatchError("threshold_sweep", scores.shape, seg.shape)
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    if np.any(np.diff(grid) <= 0) or grid.min() < 0.0 or grid.max() > 1.0:
        raise PreconditionError("threshold_sweep", "grid must increase strictly within [0, 1]")
    total = int(seg.sum()) if n_true_total is None else int(n_true_total)

    # counts of edges with score >= t, via sorted scores
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    cum_lab = np.concatenate([[0], np.cumsum(labels[order][::-1])])[::-1]
    cum_seg = np.concatenate([[0], np.cumsum(seg[order][::-1])])[::-1]
    first = np.searchsorted(s_sorted, grid, side="left")
    n = len(scores)
    metrics = tuple(
        SegmentMetrics(
            true_kept=int(cum_seg[i]),
            true_total=total,
            predicted_total=int(n - i),
            predicted_true=int(cum_lab[i]),
        )
        for i in first
    )
    return SweepCurve(thresholds=grid, metrics=metrics)


@dataclass(frozen=True)
class MatchedPurity:
    """Result of `efficiency_at_purity`.

    When `attained` is False, `threshold` and `efficiency` are None and
    `max_purity` is the highest purity found on the curve.
    """

    attained: bool
    threshold: Optional[float]
    efficiency: Optional[float]
    purity: Optional[float]
    max_purity: float


def efficiency_at_purity(curve: SweepCurve, target_purity: float) -> MatchedPurity:
    """Threshold of maximal efficiency among those reaching `target_purity`.

    Ties go to the lowest threshold.
    """
    eff = curve.efficiency
    pur = curve.purity
    ok = np.flatnonzero(pur >= target_purity)
    if len(ok) == 0:
        logger.warning(
            "target purity %.4f not attained (max %.4f)", target_purity, float(pur.max())
        )
        return MatchedPurity(False, None, None, None, float(pur.max()))
    best = ok[np.argmax(eff[ok])]  # argmax returns the first, i.e. lowest threshold
    return MatchedPurity(
        attained=True,
        threshold=float(curve.thresholds[best]),
        efficiency=float(eff[best]),
        purity=float(pur[best]),
        max_purity=float(pur.max()),
    )


def conformal_transform(x: float, y: float) -> tuple[float, float]:
    """Maps (x, y) to (u, v) = (x, y) / (x^2 + y^2).

    Circles through the origin become straight lines 2au + 2bv = 1.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r2 = x * x + y * y
    if np.any(r2 == 0.0):
        raise PreconditionError("conformal_transform", "the origin has no image")
    u, v = x / r2, y / r2
    if u.ndim == 0:
        return float(u), float(v)
    return u, v
