"""Candidate-edge graphs from events under geometric cuts, with skip edges.

Edges run from a hit on a lower plane to a hit on a higher plane at most
`1 + skip_max` planes away, and must pass three cuts: the transverse
distance, the transverse distance per unit of plane separation in z, and the
wrapped azimuth difference.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .config import read_key_values, write_key_values
from .detector import DetectorGeometry, Hit, wrap_angle
from .evalcli.metrics import SegmentMetrics
from .exceptions import (
    GraphEventMismatchError,
    InvalidConfigError,
    PreconditionError,
    ShapeMismatchError,
)
from .io import read_jsonl, write_jsonl
from .simgen import Event

logger = logging.getLogger(__name__)

MAX_SKIP = 23


@dataclass(frozen=True)
class CutConfig:
    """Graph-builder thresholds."""

    max_dxy: float = 34.4
    max_dxy_over_dz: float = 5.4
    max_abs_dphi: float = 2.3
    skip_max: int = 3

    def __post_init__(self):
        for name in ("max_dxy", "max_dxy_over_dz", "max_abs_dphi"):
            if not getattr(self, name) > 0.0:
                raise InvalidConfigError(name, "must be > 0")
        if int(self.skip_max) != self.skip_max or not 0 <= self.skip_max <= MAX_SKIP:
            raise InvalidConfigError("skip_max", f"must be an integer in [0, {MAX_SKIP}]")

    @property
    def max_plane_gap(self) -> int:
        return 1 + int(self.skip_max)

    @classmethod
    def from_config(cls, section: dict) -> CutConfig:
        try:
            return cls(
                max_dxy=float(section["max_dxy"]),
                max_dxy_over_dz=float(section["max_dxy_over_dz"]),
                max_abs_dphi=float(section["max_abs_dphi"]),
                skip_max=int(section["skip_max"]),
            )
        except KeyError as e:
            raise InvalidConfigError(str(e), "missing cut") from e

    def write(self, path: Union[Path, str]) -> None:
        write_key_values(path, asdict(self))

    @classmethod
    def read(cls, path: Union[Path, str]) -> CutConfig:
        return cls.from_config(read_key_values(path))


@dataclass
class EventGraph:
    """Hits as nodes and candidate segments as directed edges.

    Attributes:
        X: (n_nodes, 3) node features (r, phi, z).
        E: (n_edges, 2) source and target node indices.
        labels: (n_edges,) truth labels or None.
        node_plane, node_event, node_hit_id: per-node plane, event and hit ids.
    """

    X: np.ndarray
    E: np.ndarray
    labels: Optional[np.ndarray]
    node_plane: np.ndarray
    node_event: np.ndarray
    node_hit_id: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.X.shape[0]

    @property
    def n_edges(self) -> int:
        return self.E.shape[0]

    def event_ids(self) -> list[int]:
        """Event ids in node order."""
        return list(dict.fromkeys(self.node_event.tolist()))

    def validate(self, skip_max: Optional[int] = None) -> None:
        """Checks shapes and edge invariants."""
        n = self.n_nodes
        if self.X.ndim != 2 or self.X.shape[1] != 3:
            raise ShapeMismatchError("EventGraph.X", "(n, 3)", self.X.shape)
        if self.E.ndim != 2 or self.E.shape[1] != 2:
            raise ShapeMismatchError("EventGraph.E", "(m, 2)", self.E.shape)
        for name in ("node_plane", "node_event", "node_hit_id"):
            if getattr(self, name).shape != (n,):
                raise ShapeMismatchError(f"EventGraph.{name}", (n,), getattr(self, name).shape)
        if self.labels is not None and self.labels.shape != (self.n_edges,):
            raise ShapeMismatchError("EventGraph.labels", (self.n_edges,), self.labels.shape)
        if self.n_edges == 0:
            return
        src, dst = self.E[:, 0], self.E[:, 1]
        if src.min() < 0 or dst.max() >= n or dst.min() < 0 or src.max() >= n:
            raise PreconditionError("EventGraph", "edge index out of range")
        gap = self.node_plane[dst] - self.node_plane[src]
        if np.any(gap <= 0):
            raise PreconditionError("EventGraph", "edges must go to a strictly higher plane")
        if skip_max is not None and np.any(gap > 1 + skip_max):
            raise PreconditionError("EventGraph", "edge spans more than 1 + skip_max planes")
        if np.any(self.node_event[src] != self.node_event[dst]):
            raise PreconditionError("EventGraph", "edge joins two events")
        if len(np.unique(src.astype(np.int64) * n + dst)) != self.n_edges:
            raise PreconditionError("EventGraph", "duplicate edges")

    def edge_keys(self) -> list[tuple[int, int, int]]:
        """(event_id, source_hit, target_hit) per edge."""
        src, dst = self.E[:, 0], self.E[:, 1]
        return list(
            zip(
                self.node_event[src].tolist(),
                self.node_hit_id[src].tolist(),
                self.node_hit_id[dst].tolist(),
            )
        )

    def split_by_event(self) -> list[EventGraph]:
        """Per-event sub-graphs of a batched graph, node indices re-based."""
        out = []
        for ev_id in self.event_ids():
            nodes = np.flatnonzero(self.node_event == ev_id)
            lo = nodes[0] if len(nodes) else 0
            emask = self.node_event[self.E[:, 0]] == ev_id if self.n_edges else np.zeros(0, bool)
            out.append(
                EventGraph(
                    X=self.X[nodes],
                    E=self.E[emask] - lo,
                    labels=None if self.labels is None else self.labels[emask],
                    node_plane=self.node_plane[nodes],
                    node_event=self.node_event[nodes],
                    node_hit_id=self.node_hit_id[nodes],
                )
            )
        return out

    def to_dict(self) -> dict:
        return {
            "event_ids": self.event_ids(),
            "node_hit_id": self.node_hit_id.tolist(),
            "node_plane": self.node_plane.tolist(),
            "node_event": self.node_event.tolist(),
            "X": self.X.tolist(),
            "E": self.E.tolist(),
            "labels": None if self.labels is None else self.labels.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> EventGraph:
        labels = d.get("labels")
        return cls(
            X=np.asarray(d["X"], dtype=np.float64).reshape(-1, 3),
            E=np.asarray(d["E"], dtype=np.int64).reshape(-1, 2),
            labels=None if labels is None else np.asarray(labels, dtype=bool),
            node_plane=np.asarray(d["node_plane"], dtype=np.int64),
            node_event=np.asarray(d["node_event"], dtype=np.int64),
            node_hit_id=np.asarray(d["node_hit_id"], dtype=np.int64),
        )


def edge_passes_cuts(a: Hit, b: Hit, cuts: CutConfig, geom: DetectorGeometry) -> bool:
    """Whether the pair (a, b), b downstream of a, passes the three cuts."""
    if b.plane <= a.plane:
        raise PreconditionError(
            "edge_passes_cuts", f"plane(b)={b.plane} must exceed plane(a)={a.plane}"
        )
    dz = geom.plane_z[b.plane] - geom.plane_z[a.plane]
    dxy = float(np.hypot(b.x - a.x, b.y - a.y))
    dphi = wrap_angle(b.phi - a.phi)
    return bool(_cut_mask(np.array([dxy]), np.array([dz]), np.array([dphi]), cuts)[0])


def _cut_mask(dxy: np.ndarray, dz: np.ndarray, dphi: np.ndarray, cuts: CutConfig) -> np.ndarray:
    return (
        (dxy < cuts.max_dxy)
        & (dxy / dz < cuts.max_dxy_over_dz)
        & (np.abs(dphi) < cuts.max_abs_dphi)
    )


@dataclass
class _Nodes:
    """Hits of several events, sorted by (event position, plane, hit_id)."""

    ev_pos: np.ndarray
    event_id: np.ndarray
    plane: np.ndarray
    hit_id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    truth: np.ndarray

    def __len__(self) -> int:
        return len(self.plane)


def _collect_nodes(events: Sequence[Event]) -> _Nodes:
    ids = [ev.event_id for ev in events]
    if len(set(ids)) != len(ids):
        raise PreconditionError("build_batched_graph", "duplicate event ids in batch")
    hits = [h for ev in events for h in ev.hits]
    ev_pos = np.repeat(np.arange(len(events)), [len(ev.hits) for ev in events])
    cols = {
        "event_id": np.fromiter((h.event_id for h in hits), np.int64, len(hits)),
        "plane": np.fromiter((h.plane for h in hits), np.int64, len(hits)),
        "hit_id": np.fromiter((h.hit_id for h in hits), np.int64, len(hits)),
        "x": np.fromiter((h.x for h in hits), np.float64, len(hits)),
        "y": np.fromiter((h.y for h in hits), np.float64, len(hits)),
        "r": np.fromiter((h.r for h in hits), np.float64, len(hits)),
        "phi": np.fromiter((h.phi for h in hits), np.float64, len(hits)),
        "truth": np.fromiter((h.truth_id for h in hits), np.int64, len(hits)),
    }
    order = np.lexsort((cols["hit_id"], cols["plane"], ev_pos))
    return _Nodes(ev_pos=ev_pos[order], **{k: v[order] for k, v in cols.items()})


def _window_pairs(
    ev_pos: np.ndarray, plane: np.ndarray, n_planes: int, max_gap: int
) -> tuple[np.ndarray, np.ndarray]:
    """All same-event node pairs with 0 < plane gap <= max_gap.

    Nodes must be sorted by (event position, plane). Each (event, plane)
    bucket is paired with the bucket `k` planes downstream, for every k.
    """
    if len(plane) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    n_ev = int(ev_pos.max()) + 1
    counts = np.bincount(ev_pos * n_planes + plane, minlength=n_ev * n_planes)
    starts = (np.cumsum(counts) - counts).reshape(n_ev, n_planes)
    counts = counts.reshape(n_ev, n_planes)
    srcs, dsts = [], []
    for k in range(1, min(max_gap, n_planes - 1) + 1):
        ns = counts[:, : n_planes - k].ravel()
        nd = counts[:, k:].ravel()
        s0 = starts[:, : n_planes - k].ravel()
        d0 = starts[:, k:].ravel()
        npairs = ns * nd
        total = int(npairs.sum())
        if total == 0:
            continue
        b = np.repeat(np.arange(len(npairs)), npairs)
        j = np.arange(total) - (np.cumsum(npairs) - npairs)[b]
        srcs.append(s0[b] + j // nd[b])
        dsts.append(d0[b] + j % nd[b])
    if not srcs:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(srcs), np.concatenate(dsts)


def _pair_geometry(nodes: _Nodes, src: np.ndarray, dst: np.ndarray, geom: DetectorGeometry):
    plane_z = np.asarray(geom.plane_z)
    dxy = np.hypot(nodes.x[dst] - nodes.x[src], nodes.y[dst] - nodes.y[src])
    dz = plane_z[nodes.plane[dst]] - plane_z[nodes.plane[src]]
    dphi = wrap_angle(nodes.phi[dst] - nodes.phi[src])
    return dxy, dz, np.asarray(dphi).reshape(-1)


def _build(events: Sequence[Event], cuts: CutConfig, geom: DetectorGeometry) -> EventGraph:
    nodes = _collect_nodes(events)
    if len(nodes) and (nodes.plane.min() < 0 or nodes.plane.max() >= geom.n_planes):
        raise PreconditionError("build_event_graph", "hit plane index out of range")
    src, dst = _window_pairs(nodes.ev_pos, nodes.plane, geom.n_planes, cuts.max_plane_gap)
    dxy, dz, dphi = _pair_geometry(nodes, src, dst, geom)
    keep = _cut_mask(dxy, dz, dphi, cuts)
    src, dst = src[keep], dst[keep]
    order = np.lexsort((dst, src))
    E = np.stack([src[order], dst[order]], axis=1).astype(np.int64).reshape(-1, 2)
    X = np.stack(
        [nodes.r, nodes.phi, np.asarray(geom.plane_z)[nodes.plane]], axis=1
    ).reshape(-1, 3)
    return EventGraph(
        X=X,
        E=E,
        labels=None,
        node_plane=nodes.plane,
        node_event=nodes.event_id,
        node_hit_id=nodes.hit_id,
    )


def build_event_graph(ev: Event, cuts: CutConfig, geom: DetectorGeometry) -> EventGraph:
    """Graph of one event; nodes sorted by (plane, hit_id), edges by (source, target)."""
    return _build([ev], cuts, geom)


def build_batched_graph(
    events: Sequence[Event], cuts: CutConfig, geom: DetectorGeometry
) -> EventGraph:
    """One graph for several events, with no edge between two events.

    All events are processed in the same vectorized pass; per event the result
    equals `build_event_graph` up to a node index offset.
    """
    return _build(events, cuts, geom)


def concat_graphs(graphs: Sequence[EventGraph]) -> EventGraph:
    """Stacks already built graphs into one batch, offsetting node indices."""
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs[:-1]])
    has_labels = all(g.labels is not None for g in graphs)
    return EventGraph(
        X=np.concatenate([g.X for g in graphs]) if graphs else np.zeros((0, 3)),
        E=np.concatenate([g.E + o for g, o in zip(graphs, offsets)]).reshape(-1, 2)
        if graphs
        else np.zeros((0, 2), np.int64),
        labels=np.concatenate([g.labels for g in graphs]) if graphs and has_labels else None,
        node_plane=np.concatenate([g.node_plane for g in graphs]) if graphs else np.zeros(0, np.int64),
        node_event=np.concatenate([g.node_event for g in graphs]) if graphs else np.zeros(0, np.int64),
        node_hit_id=np.concatenate([g.node_hit_id for g in graphs]) if graphs else np.zeros(0, np.int64),
    )


def _as_events(events: Union[Event, Iterable[Event]]) -> list[Event]:
    return [events] if isinstance(events, Event) else list(events)


def node_truth(g: EventGraph, events: Union[Event, Iterable[Event]]) -> np.ndarray:
    """truth_id of every node, looked up in the events the graph was built from."""
    lookup = {(ev.event_id, h.hit_id): h.truth_id for ev in _as_events(events) for h in ev.hits}
    out = np.empty(g.n_nodes, dtype=np.int64)
    for i, (ev_id, hid) in enumerate(zip(g.node_event.tolist(), g.node_hit_id.tolist())):
        try:
            out[i] = lookup[(ev_id, hid)]
        except KeyError as e:
            raise GraphEventMismatchError(event_id=ev_id, hit_id=hid) from e
    return out


def label_edges(g: EventGraph, events: Union[Event, Iterable[Event]]) -> np.ndarray:
    """True where both hits belong to the same particle; noise never matches."""
    truth = node_truth(g, events)
    src, dst = g.E[:, 0], g.E[:, 1]
    return (truth[src] == truth[dst]) & (truth[src] >= 0)


def build_labeled_graphs(
    events: Sequence[Event], cuts: CutConfig, geom: DetectorGeometry
) -> list[EventGraph]:
    """One labeled graph per event."""
    graphs = []
    for ev in events:
        g = build_event_graph(ev, cuts, geom)
        g.labels = label_edges(g, ev)
        graphs.append(g)
    return graphs


def _segment_pairs(
    event_key: np.ndarray, truth: np.ndarray, plane: np.ndarray, max_gap: int
) -> tuple[np.ndarray, np.ndarray]:
    """Consecutive recorded hits of each truth track, plane gap <= max_gap."""
    order = np.lexsort((plane, truth, event_key))
    ev_o, tr_o, pl_o = event_key[order], truth[order], plane[order]
    same = (ev_o[1:] == ev_o[:-1]) & (tr_o[1:] == tr_o[:-1]) & (tr_o[:-1] >= 0)
    ok = same & (pl_o[1:] - pl_o[:-1] <= max_gap)
    return order[:-1][ok], order[1:][ok]


def true_segments(ev: Event, truth_skip_max: int) -> set[tuple[int, int, int]]:
    """Truth segments of an event as (event_id, source_hit, target_hit)."""
    plane = {h.hit_id: h.plane for h in ev.hits}
    out = set()
    for t in ev.truth_tracks:
        ids = sorted(t.hit_ids, key=lambda i: plane[i])
        for a, b in zip(ids[:-1], ids[1:]):
            if plane[b] - plane[a] <= 1 + truth_skip_max:
                out.add((ev.event_id, a, b))
    return out


def segment_mask(
    g: EventGraph, events: Union[Event, Iterable[Event]], truth_skip_max: int
) -> tuple[np.ndarray, int]:
    """Per-edge truth-segment flags and the number of truth segments.

    Returns:
        (mask over edges, total truth segments among the graph's nodes)
    """
    truth = node_truth(g, events)
    a, b = _segment_pairs(g.node_event, truth, g.node_plane, 1 + truth_skip_max)
    n = max(g.n_nodes, 1)
    seg_keys = a.astype(np.int64) * n + b
    edge_keys = g.E[:, 0].astype(np.int64) * n + g.E[:, 1]
    return np.isin(edge_keys, seg_keys), len(seg_keys)


def builder_metrics(
    graphs: Sequence[EventGraph], events: Sequence[Event], truth_skip_max: int
) -> SegmentMetrics:
    """Efficiency and purity of the graph builder itself (every edge predicted)."""
    total = SegmentMetrics(0, 0, 0, 0)
    by_id = {ev.event_id: ev for ev in events}
    for g in graphs:
        evs = [by_id[i] for i in g.event_ids()]
        mask, n_seg = segment_mask(g, evs, truth_skip_max)
        labels = g.labels if g.labels is not None else label_edges(g, evs)
        total = total + SegmentMetrics(
            true_kept=int(mask.sum()),
            true_total=n_seg,
            predicted_total=g.n_edges,
            predicted_true=int(labels.sum()),
        )
    return total


@dataclass(frozen=True)
class PairTable:
    """Every same-event pair within a plane window, under vacuous cuts.

    Any cut configuration with a window no wider than the table's selects a
    subset of these rows, so builder efficiency and purity for a genome are
    masks over precomputed columns.
    """

    dxy: np.ndarray
    dxy_over_dz: np.ndarray
    abs_dphi: np.ndarray
    gap: np.ndarray
    label: np.ndarray
    is_segment: np.ndarray
    n_segments: int

    def select(self, cuts: CutConfig) -> np.ndarray:
        return (
            (self.dxy < cuts.max_dxy)
            & (self.dxy_over_dz < cuts.max_dxy_over_dz)
            & (self.abs_dphi < cuts.max_abs_dphi)
            & (self.gap <= cuts.max_plane_gap)
        )

    def metrics(self, cuts: CutConfig) -> SegmentMetrics:
        keep = self.select(cuts)
        return SegmentMetrics(
            true_kept=int(np.count_nonzero(keep & self.is_segment)),
            true_total=self.n_segments,
            predicted_total=int(np.count_nonzero(keep)),
            predicted_true=int(np.count_nonzero(keep & self.label)),
        )


def candidate_pairs(
    events: Sequence[Event], geom: DetectorGeometry, max_gap: int, truth_skip_max: int
) -> PairTable:
    """Builds the `PairTable` of `events` for plane gaps up to `max_gap`."""
    nodes = _collect_nodes(events)
    src, dst = _window_pairs(nodes.ev_pos, nodes.plane, geom.n_planes, max_gap)
    dxy, dz, dphi = _pair_geometry(nodes, src, dst, geom)
    a, b = _segment_pairs(nodes.ev_pos, nodes.truth, nodes.plane, 1 + truth_skip_max)
    n = max(len(nodes), 1)
    is_seg = np.isin(src.astype(np.int64) * n + dst, a.astype(np.int64) * n + b)
    label = (nodes.truth[src] == nodes.truth[dst]) & (nodes.truth[src] >= 0)
    logger.debug("pair table: %d pairs, %d truth segments", len(src), len(a))
    return PairTable(
        dxy=dxy,
        dxy_over_dz=dxy / dz,
        abs_dphi=np.abs(dphi),
        gap=nodes.plane[dst] - nodes.plane[src],
        label=label,
        is_segment=is_seg,
        n_segments=len(a),
    )


def gap_histogram(events: Iterable[Event]) -> dict[int, int]:
    """Number of consecutive missing planes between recorded hits of each track."""
    counts: Counter = Counter()
    for ev in events:
        plane = {h.hit_id: h.plane for h in ev.hits}
        for t in ev.truth_tracks:
            planes = sorted(plane[i] for i in t.hit_ids)
            for p, q in zip(planes[:-1], planes[1:]):
                counts[q - p - 1] += 1
    return dict(sorted(counts.items()))


def prune_redundant_edges(E: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Drops kept edges whose endpoints are joined by a longer kept path.

    Args:
        E: (n_edges, 2) edges, source plane below target plane.
        keep: (n_edges,) boolean mask of kept edges.

    Returns:
        the pruned mask.
    """
    keep = np.asarray(keep, dtype=bool).copy()
    kept = np.flatnonzero(keep)
    succ: dict[int, list[int]] = {}
    for k in kept:
        succ.setdefault(int(E[k, 0]), []).append(int(E[k, 1]))

    def reachable_in_two_or_more(a: int, b: int) -> bool:
        stack = [c for c in succ.get(a, []) if c != b]
        seen = set(stack)
        while stack:
            c = stack.pop()
            for d in succ.get(c, []):
                if d == b:
                    return True
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        return False

    for k in kept:
        if reachable_in_two_or_more(int(E[k, 0]), int(E[k, 1])):
            keep[k] = False
    return keep


def write_graphs(path: Union[Path, str], graphs: Iterable[EventGraph]) -> int:
    return write_jsonl(path, (g.to_dict() for g in graphs))


def read_graphs(path: Union[Path, str]) -> list[EventGraph]:
    return [EventGraph.from_dict(d) for d in read_jsonl(path)]
