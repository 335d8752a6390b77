"""Traditional track finding: per-package segments, helical fits, segment linking.

Segments are greedy nearest-neighbor chains inside one package. Each gets a
circle fit constrained through the origin (the target) and a dip from z
against arc length. Segments of different packages are linked when the
projection of one fit lands close to the other, or, failing that, when the
two circle centers agree.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .detector import DetectorGeometry, Hit, wrap_angle
from .evalcli.metrics import EdgeKey
from .exceptions import DegenerateFitError, InvalidConfigError, PreconditionError
from .simgen import Event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TradConfig:
    """Thresholds of the traditional method (cm and cm^2)."""

    proximity: float = 2.0
    min_hits: int = 3
    d2_scale: float = 1000.0
    d2_min: float = 5.0
    d2_max: float = 25.0
    center_d2_max: float = 25.0

    def __post_init__(self):
        if self.proximity <= 0.0:
            raise InvalidConfigError("proximity", "must be > 0")
        if self.min_hits < 3:
            raise InvalidConfigError("min_hits", "a fit needs at least 3 hits")
        if not 0.0 < self.d2_min <= self.d2_max:
            raise InvalidConfigError("d2_min", "need 0 < d2_min <= d2_max")

    @classmethod
    def from_config(cls, section: dict) -> TradConfig:
        known = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class HelixFit:
    """Fitted circle in xy plus dip.

    The helix passes through the reference point at angle `theta0` around the
    center, at `z0`, and turns counter-clockwise when `turn_sign` is +1.
    """

    x_c: float
    y_c: float
    r_c: float
    tan_lambda: float
    residual: float
    turn_sign: int = 1
    theta0: float = 0.0
    z0: float = 0.0

    @property
    def center(self) -> tuple[float, float]:
        return self.x_c, self.y_c


def helical_fit(hits: Sequence[Hit], constrain_origin: bool = True) -> HelixFit:
    """Least-squares circle (algebraic distance) and dip of `hits`.

    With the origin constraint the circle solves 2 x_c x + 2 y_c y = x^2 + y^2
    and r_c^2 = x_c^2 + y_c^2. Without it a free term is added.

    Raises:
        DegenerateFitError: the hits do not determine a circle.
    """
    if len(hits) < 3:
        raise PreconditionError("helical_fit", f"need at least 3 hits, got {len(hits)}")
    hits = sorted(hits, key=lambda h: (h.z, h.hit_id))
    x = np.array([h.x for h in hits])
    y = np.array([h.y for h in hits])
    z = np.array([h.z for h in hits])
    rhs = x * x + y * y
    if constrain_origin:
        A = np.stack([2.0 * x, 2.0 * y], axis=1)
    else:
        A = np.stack([2.0 * x, 2.0 * y, np.ones_like(x)], axis=1)
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < A.shape[1]:
        raise DegenerateFitError(n_hits=len(hits), rank=int(rank))
    x_c, y_c = float(sol[0]), float(sol[1])
    if constrain_origin:
        r_c = math.hypot(x_c, y_c)
        theta0, z0 = math.atan2(-y_c, -x_c), 0.0
    else:
        r_c = math.sqrt(max(float(sol[2]) + x_c * x_c + y_c * y_c, 0.0))
        theta0, z0 = math.atan2(y[0] - y_c, x[0] - x_c), float(z[0])
    if not r_c > 0.0:
        raise DegenerateFitError(n_hits=len(hits), rank=int(rank))

    theta = np.arctan2(y - y_c, x - x_c)
    dtheta = np.asarray(wrap_angle(theta - theta0)).reshape(-1)
    turn = 1 if dtheta[-1] >= 0.0 else -1
    s = r_c * turn * dtheta
    ss = float(np.dot(s, s))
    if ss == 0.0:
        raise DegenerateFitError(n_hits=len(hits), rank=int(rank))
    tan_lambda = float(np.dot(s, z - z0) / ss)
    residual = float(np.sqrt(np.mean((np.hypot(x - x_c, y - y_c) - r_c) ** 2)))
    return HelixFit(
        x_c=x_c, y_c=y_c, r_c=r_c, tan_lambda=tan_lambda, residual=residual,
        turn_sign=turn, theta0=theta0, z0=z0,
    )


def project_fit(fit: HelixFit, z: float) -> tuple[float, float]:
    """(x, y) of the fitted helix at `z`."""
    theta = fit.theta0 + fit.turn_sign * (z - fit.z0) / (fit.tan_lambda * fit.r_c)
    return fit.x_c + fit.r_c * math.cos(theta), fit.y_c + fit.r_c * math.sin(theta)


@dataclass(frozen=True)
class Segment:
    package: int
    hits: tuple[Hit, ...]
    fit: HelixFit


@dataclass
class TrackCandidate:
    segments: list[Segment]
    fit: HelixFit
    hits: list[Hit] = field(default_factory=list)

    def __post_init__(self):
        if not self.hits:
            self.hits = sorted((h for s in self.segments for h in s.hits), key=lambda h: h.plane)

    @property
    def last_package(self) -> int:
        return self.segments[-1].package

    def add(self, seg: Segment, fit: HelixFit) -> None:
        self.segments.append(seg)
        self.hits = sorted(self.hits + list(seg.hits), key=lambda h: h.plane)
        self.fit = fit

    def merge(self, other: TrackCandidate, fit: HelixFit) -> None:
        """Appends the segments of a downstream candidate."""
        self.segments.extend(other.segments)
        self.hits = sorted(self.hits + other.hits, key=lambda h: h.plane)
        self.fit = fit


def find_segments(
    hits: Sequence[Hit], geom: DetectorGeometry, cfg: TradConfig = TradConfig()
) -> list[Segment]:
    """Greedy chains inside one package, grown plane by plane.

    A chain starts from the most upstream unused hit and takes, on each
    following plane, the unused hit closest in xy to its last hit when closer
    than `cfg.proximity` (ties to the lowest hit_id). Chains of at least
    `cfg.min_hits` hits become segments.
    """
    if not hits:
        return []
    packages = {geom.package_of_plane[h.plane] for h in hits}
    if len(packages) != 1:
        raise PreconditionError("find_segments", f"hits span packages {sorted(packages)}")
    package = packages.pop()
    by_plane: dict[int, list[Hit]] = {}
    for h in sorted(hits, key=lambda h: (h.plane, h.hit_id)):
        by_plane.setdefault(h.plane, []).append(h)
    planes = sorted(by_plane)
    used: set[int] = set()
    segments = []
    for seed in (h for p in planes for h in by_plane[p]):
        if seed.hit_id in used:
            continue
        used.add(seed.hit_id)
        chain = [seed]
        for p in planes:
            if p <= chain[-1].plane:
                continue
            last = chain[-1]
            best: Optional[tuple[float, int, Hit]] = None
            for h in by_plane[p]:
                if h.hit_id in used:
                    continue
                d = math.hypot(h.x - last.x, h.y - last.y)
                if d < cfg.proximity and (best is None or (d, h.hit_id) < best[:2]):
                    best = (d, h.hit_id, h)
            if best is not None:
                chain.append(best[2])
                used.add(best[2].hit_id)
        if len(chain) < cfg.min_hits:
            # only the seed stays consumed
            for h in chain[1:]:
                used.discard(h.hit_id)
            continue
        try:
            fit = helical_fit(chain)
        except DegenerateFitError as e:
            logger.debug("package %d: chain dropped (%s)", package, e.msg)
            continue
        segments.append(Segment(package=package, hits=tuple(chain), fit=fit))
    return segments


def projection_threshold(r_c: float, cfg: TradConfig = TradConfig()) -> float:
    """d^2 threshold (cm^2) of a projection match: d2_scale / r_c clamped."""
    return float(np.clip(cfg.d2_scale / r_c, cfg.d2_min, cfg.d2_max))


def _match(
    fit: HelixFit, seg: Segment, geom: DetectorGeometry, cfg: TradConfig
) -> Optional[tuple[int, float]]:
    """(kind, squared distance) when `seg` matches `fit`; kind 0 is a projection match."""
    z = geom.plane_z[geom.planes_in_package(seg.package)[0]]
    px, py = project_fit(fit, z)
    sx, sy = project_fit(seg.fit, z)
    d2 = (px - sx) ** 2 + (py - sy) ** 2
    if d2 < projection_threshold(fit.r_c, cfg):
        return 0, d2
    c2 = (fit.x_c - seg.fit.x_c) ** 2 + (fit.y_c - seg.fit.y_c) ** 2
    if c2 < cfg.center_d2_max:
        return 1, c2
    return None


def _refit(cand: TrackCandidate, hits: list[Hit]) -> HelixFit:
    try:
        return helical_fit(hits)
    except DegenerateFitError as e:
        logger.warning("refit failed, previous fit kept (%s)", e.msg)
        return cand.fit


def link_segments(
    segments: Sequence[Segment], geom: DetectorGeometry, cfg: TradConfig = TradConfig()
) -> list[TrackCandidate]:
    """Links segments of successive packages into track candidates.

    First pass: from the most upstream package, each open candidate is matched
    against the segments of the next package that has any; matches are
    assigned greedily, projection matches before center matches, smallest
    distance first. Second pass, run once: linked candidates are refitted on
    their combined hits and matched against the first segment of every
    candidate starting further downstream, isolated segments and linked
    ones alike. A match merges the whole downstream candidate, which is
    merged at most once; matches are taken by kind, then by distance.
    """
    by_pkg: dict[int, list[Segment]] = {}
    for s in segments:
        by_pkg.setdefault(s.package, []).append(s)
    packages = sorted(by_pkg)
    candidates: list[TrackCandidate] = []
    open_idx: list[int] = []
    for k in packages:
        segs = by_pkg[k]
        pairs = []
        for ci in open_idx:
            for si, s in enumerate(segs):
                m = _match(candidates[ci].fit, s, geom, cfg)
                if m is not None:
                    pairs.append((m[0], m[1], ci, si))
        pairs.sort()
        taken_c: set[int] = set()
        taken_s: set[int] = set()
        for _, _, ci, si in pairs:
            if ci in taken_c or si in taken_s:
                continue
            candidates[ci].add(segs[si], segs[si].fit)
            taken_c.add(ci)
            taken_s.add(si)
        open_idx = sorted(taken_c)
        for si, s in enumerate(segs):
            if si not in taken_s:
                candidates.append(TrackCandidate(segments=[s], fit=s.fit))
                open_idx.append(len(candidates) - 1)

    linked = [i for i, c in enumerate(candidates) if len(c.segments) > 1]
    for i in linked:
        candidates[i].fit = _refit(candidates[i], candidates[i].hits)
    pairs = []
    for li in linked:
        c = candidates[li]
        for ti, t in enumerate(candidates):
            if ti != li and t.segments[0].package > c.last_package:
                m = _match(c.fit, t.segments[0], geom, cfg)
                if m is not None:
                    pairs.append((m[0], m[1], li, ti))
    pairs.sort()
    absorbed: set[int] = set()
    for _, _, li, ti in pairs:
        c, t = candidates[li], candidates[ti]
        if li in absorbed or ti in absorbed:
            continue
        if t.segments[0].package <= c.last_package:
            continue
        c.merge(t, _refit(c, c.hits + t.hits))
        absorbed.add(ti)
    if absorbed:
        logger.debug("recovery pass merged %d candidates", len(absorbed))
    return [c for i, c in enumerate(candidates) if i not in absorbed]


def find_candidates(
    ev: Event, geom: DetectorGeometry, cfg: TradConfig = TradConfig()
) -> list[TrackCandidate]:
    """Segments of every package, linked into candidates."""
    by_pkg: dict[int, list[Hit]] = {}
    for h in ev.hits:
        by_pkg.setdefault(geom.package_of_plane[h.plane], []).append(h)
    segments = [s for k in sorted(by_pkg) for s in find_segments(by_pkg[k], geom, cfg)]
    return link_segments(segments, geom, cfg)


def candidate_edges(ev_id: int, candidates: Sequence[TrackCandidate]) -> set[EdgeKey]:
    """Consecutive hit pairs of every candidate, by plane."""
    out = set()
    for c in candidates:
        for a, b in zip(c.hits[:-1], c.hits[1:]):
            out.add((ev_id, a.hit_id, b.hit_id))
    return out


def run_traditional(
    ev: Event, geom: DetectorGeometry, cfg: TradConfig = TradConfig()
) -> set[EdgeKey]:
    """Edges predicted true by the traditional method, as (event_id, source, target)."""
    return candidate_edges(ev.event_id, find_candidates(ev, geom, cfg))
