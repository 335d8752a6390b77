"""Scoring of per-edge predictions against event truth.

Network scores and traditional-method predictions both arrive as edge rows
(event_id, source_hit, target_hit, score) and go through the same functions.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence

import numpy as np

from ..graphbuild import true_segments
from ..io import EdgeRow
from ..simgen import Event
from .metrics import SegmentMetrics, SweepCurve, default_grid, threshold_sweep

logger = logging.getLogger(__name__)


def truth_lookup(events: Iterable[Event]) -> dict[tuple[int, int], int]:
    """(event_id, hit_id) -> truth_id."""
    return {(ev.event_id, h.hit_id): h.truth_id for ev in events for h in ev.hits}


def _flags(
    rows: Sequence[EdgeRow], events: Sequence[Event], truth_skip_max: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    truth_id = truth_lookup(events)
    segments = set()
    for ev in events:
        segments |= true_segments(ev, truth_skip_max)
    scores = np.array([r[3] for r in rows], dtype=np.float64)
    same = np.zeros(len(rows), dtype=bool)
    is_seg = np.zeros(len(rows), dtype=bool)
    for i, (ev_id, a, b, _) in enumerate(rows):
        ta = truth_id.get((ev_id, a), -1)
        same[i] = ta >= 0 and ta == truth_id.get((ev_id, b), -1)
        is_seg[i] = (ev_id, a, b) in segments
    return scores, same, is_seg, len(segments)


def sweep_rows(
    rows: Sequence[EdgeRow],
    events: Sequence[Event],
    truth_skip_max: int = 3,
    grid: Optional[np.ndarray] = None,
) -> SweepCurve:
    """Threshold sweep of scored edges against the truth segments of `events`."""
    scores, same, is_seg, n_seg = _flags(rows, events, truth_skip_max)
    return threshold_sweep(
        scores, same, grid=default_grid() if grid is None else grid,
        segment_mask=is_seg, n_true_total=n_seg,
    )


def metrics_rows(
    rows: Sequence[EdgeRow],
    events: Sequence[Event],
    truth_skip_max: int = 3,
    threshold: float = 0.5,
) -> SegmentMetrics:
    """Metrics of the edges scored at or above `threshold`."""
    scores, same, is_seg, n_seg = _flags(rows, events, truth_skip_max)
    pred = scores >= threshold
    return SegmentMetrics(
        true_kept=int(np.count_nonzero(pred & is_seg)),
        true_total=n_seg,
        predicted_total=int(np.count_nonzero(pred)),
        predicted_true=int(np.count_nonzero(pred & same)),
    )


def edge_set_rows(edges: Iterable[tuple[int, int, int]]) -> list[EdgeRow]:
    """Rows of a predicted edge set, score fixed at 1.0."""
    return [(e, a, b, 1.0) for e, a, b in sorted(edges)]
