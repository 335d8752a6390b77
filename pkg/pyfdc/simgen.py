"""Synthetic labeled events: helical tracks through the chamber planes."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .detector import DetectorGeometry, Hit, to_cylindrical
from .exceptions import InvalidConfigError, PreconditionError
from .io import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

NOISE_TRUTH_ID = -1


@dataclass(frozen=True)
class HelixParams:
    """Helix through the solenoid field.

    Attributes:
        kappa: signed curvature (1/cm), positive turns counter-clockwise.
        phi0: transverse direction at the vertex (rad).
        tan_lambda: dz / ds, s being the transverse path length.
        x0, y0, z0: vertex (cm).
    """

    kappa: float
    phi0: float
    tan_lambda: float
    x0: float = 0.0
    y0: float = 0.0
    z0: float = 0.0

    def center(self) -> Optional[tuple[float, float]]:
        """Center of the transverse circle; None for a straight line."""
        if self.kappa == 0.0:
            return None
        return (
            self.x0 - math.sin(self.phi0) / self.kappa,
            self.y0 + math.cos(self.phi0) / self.kappa,
        )

    def path_length(self, z: float) -> float:
        """Transverse path length travelled when reaching `z`."""
        if z < self.z0:
            raise PreconditionError("propagate_helix", f"z={z} is upstream of z0={self.z0}")
        return (z - self.z0) / self.tan_lambda


def helix_xy(p: HelixParams, z: float) -> tuple[float, float]:
    """Transverse position of the helix at `z`, ignoring the acceptance.

    Uses sin(a + d) - sin(a) = 2 cos(a + d/2) sin(d/2) so that kappa -> 0
    reduces to the straight line without a special case.
    """
    s = p.path_length(z)
    half = 0.5 * p.kappa * s
    chord = s * float(np.sinc(half / np.pi))
    return (
        p.x0 + chord * math.cos(p.phi0 + half),
        p.y0 + chord * math.sin(p.phi0 + half),
    )


def propagate_helix(
    p: HelixParams, z: float, geom: DetectorGeometry
) -> Optional[tuple[float, float]]:
    """Crossing of the helix with the plane at `z`.

    Returns:
        (x, y) in cm, or None when the point lies outside the radial acceptance.
    """
    x, y = helix_xy(p, z)
    if not geom.in_acceptance(math.hypot(x, y)):
        return None
    return x, y


def track_crossings(
    p: HelixParams, geom: DetectorGeometry
) -> list[tuple[int, float, float]]:
    """Unsmeared (plane, x, y) crossings of a track, in plane order.

    The track ends at the first plane beyond the outer radius or after half a
    turn; planes where it is still inside the inner radius are skipped.
    """
    out = []
    for plane, z in enumerate(geom.plane_z):
        if z < p.z0:
            continue
        if abs(p.kappa) * p.path_length(z) >= math.pi:
            break
        x, y = helix_xy(p, z)
        r = math.hypot(x, y)
        if r > geom.active_radius_max:
            break
        if r < geom.active_radius_min:
            continue
        out.append((plane, x, y))
    return out


@dataclass(frozen=True)
class SimConfig:
    """Event generation settings."""

    n_tracks_min: int = 1
    n_tracks_max: int = 8
    hit_efficiency: float = 0.92
    noise_hits_mean: float = 3.0
    smear_sigma_xy: float = 0.02
    kappa_min: float = 1.0 / 300.0
    kappa_max: float = 1.0 / 40.0
    tan_lambda_min: float = 8.0
    tan_lambda_max: float = 40.0
    rng_seed: int = 20250501

    def __post_init__(self):
        if not 0.0 < self.hit_efficiency <= 1.0:
            raise InvalidConfigError("hit_efficiency", "must be in (0, 1]")
        if self.smear_sigma_xy < 0.0:
            raise InvalidConfigError("smear_sigma_xy", "must be >= 0")
        if self.noise_hits_mean < 0.0:
            raise InvalidConfigError("noise_hits_mean", "must be >= 0")
        if not 0 <= self.n_tracks_min <= self.n_tracks_max:
            raise InvalidConfigError("n_tracks_min", "need 0 <= n_tracks_min <= n_tracks_max")
        if not 0.0 <= self.kappa_min <= self.kappa_max:
            raise InvalidConfigError("kappa_min", "need 0 <= kappa_min <= kappa_max")
        if not 0.0 < self.tan_lambda_min <= self.tan_lambda_max:
            raise InvalidConfigError("tan_lambda_min", "need 0 < tan_lambda_min <= tan_lambda_max")

    @classmethod
    def from_config(cls, section: dict) -> SimConfig:
        known = {k: v for k, v in section.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class TruthTrack:
    truth_id: int
    helix: HelixParams
    hit_ids: tuple[int, ...]


@dataclass
class Event:
    """One collision: recorded hits and the tracks that produced them."""

    event_id: int
    hits: list[Hit]
    truth_tracks: list[TruthTrack] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "hits": [
                {
                    "hit_id": h.hit_id,
                    "x": h.x,
                    "y": h.y,
                    "z": h.z,
                    "plane": h.plane,
                    "truth_id": h.truth_id,
                }
                for h in self.hits
            ],
            "tracks": [
                {
                    "truth_id": t.truth_id,
                    "hit_ids": list(t.hit_ids),
                    "helix": asdict(t.helix),
                }
                for t in self.truth_tracks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Event:
        ev_id = int(d["event_id"])
        hits = []
        for h in d["hits"]:
            r, phi = to_cylindrical(h["x"], h["y"])
            hits.append(
                Hit(
                    x=float(h["x"]),
                    y=float(h["y"]),
                    z=float(h["z"]),
                    r=r,
                    phi=phi,
                    plane=int(h["plane"]),
                    event_id=ev_id,
                    truth_id=int(h["truth_id"]),
                    hit_id=int(h["hit_id"]),
                )
            )
        tracks = [
            TruthTrack(
                truth_id=int(t["truth_id"]),
                helix=HelixParams(**t["helix"]),
                hit_ids=tuple(int(i) for i in t["hit_ids"]),
            )
            for t in d["tracks"]
        ]
        return cls(event_id=ev_id, hits=hits, truth_tracks=tracks)


def event_rng(seed: int, event_id: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, event_id)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, event_id])))


def _draw_helix(cfg: SimConfig, rng: np.random.Generator) -> HelixParams:
    sign = 1.0 if rng.random() < 0.5 else -1.0
    return HelixParams(
        kappa=sign * float(rng.uniform(cfg.kappa_min, cfg.kappa_max)),
        phi0=float(rng.uniform(-math.pi, math.pi)),
        tan_lambda=float(rng.uniform(cfg.tan_lambda_min, cfg.tan_lambda_max)),
    )


def generate_event(
    cfg: SimConfig,
    geom: DetectorGeometry,
    event_id: int,
    helices: Optional[list[HelixParams]] = None,
) -> Event:
    """Generates one event, reproducible from (cfg.rng_seed, event_id).

    Args:
        cfg: generation settings.
        geom: detector geometry.
        event_id: event identifier, also the generator counter key.
        helices: fixed truth tracks instead of drawn ones (fixtures).
    """
    rng = event_rng(cfg.rng_seed, event_id)
    if helices is None:
        n_tracks = int(rng.integers(cfg.n_tracks_min, cfg.n_tracks_max + 1))
        helices = [_draw_helix(cfg, rng) for _ in range(n_tracks)]

    # (plane, x, y, truth_id)
    raw: list[tuple[int, float, float, int]] = []
    for tid, hp in enumerate(helices):
        for plane, x, y in track_crossings(hp, geom):
            if rng.random() >= cfg.hit_efficiency:
                continue
            if cfg.smear_sigma_xy > 0.0:
                x += float(rng.normal(0.0, cfg.smear_sigma_xy))
                y += float(rng.normal(0.0, cfg.smear_sigma_xy))
                if not geom.in_acceptance(math.hypot(x, y)):
                    continue
            raw.append((plane, x, y, tid))

    n_noise = int(rng.poisson(cfg.noise_hits_mean))
    r2_lo = geom.active_radius_min**2
    r2_hi = geom.active_radius_max**2
    for _ in range(n_noise):
        plane = int(rng.integers(0, geom.n_planes))
        r = math.sqrt(float(rng.uniform(r2_lo, r2_hi)))
        phi = float(rng.uniform(-math.pi, math.pi))
        raw.append((plane, r * math.cos(phi), r * math.sin(phi), NOISE_TRUTH_ID))

    hit_ids = rng.permutation(len(raw))
    hits = [
        Hit.at(x, y, plane, geom, event_id=event_id, truth_id=tid, hit_id=int(hid))
        for (plane, x, y, tid), hid in zip(raw, hit_ids)
    ]
    hits.sort(key=lambda h: (h.plane, h.hit_id))

    tracks = []
    for tid, hp in enumerate(helices):
        ids = tuple(h.hit_id for h in hits if h.truth_id == tid)
        tracks.append(TruthTrack(truth_id=tid, helix=hp, hit_ids=ids))
    return Event(event_id=event_id, hits=hits, truth_tracks=tracks)


def split_sizes(n_events: int, split: tuple[float, float, float]) -> tuple[int, int, int]:
    """Sizes of the (train, val, test) partition of `n_events`."""
    if n_events < 3:
        raise PreconditionError("generate_dataset", f"need at least 3 events, got {n_events}")
    if len(split) != 3 or any(f < 0 for f in split) or abs(sum(split) - 1.0) > 1e-9:
        raise PreconditionError("generate_dataset", f"split fractions must sum to 1: {split}")
    n_train = int(round(n_events * split[0]))
    n_val = int(round(n_events * split[1]))
    return n_train, n_val, n_events - n_train - n_val


def generate_dataset(
    cfg: SimConfig,
    geom: DetectorGeometry,
    n_events: int,
    split: tuple[float, float, float] = (0.7, 0.15, 0.15),
    first_event_id: int = 0,
) -> tuple[list[Event], list[Event], list[Event]]:
    """Generates disjoint (train, val, test) event collections."""
    n_train, n_val, _ = split_sizes(n_events, split)
    logger.info("generating %d events (seed %d)", n_events, cfg.rng_seed)
    events = [generate_event(cfg, geom, first_event_id + i) for i in range(n_events)]
    return events[:n_train], events[n_train : n_train + n_val], events[n_train + n_val :]


def write_events(path: Union[Path, str], events: Iterable[Event]) -> int:
    return write_jsonl(path, (ev.to_dict() for ev in events))


def read_events(path: Union[Path, str]) -> list[Event]:
    return [Event.from_dict(d) for d in read_jsonl(path)]
