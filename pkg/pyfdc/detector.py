"""Idealized forward drift chamber geometry and coordinate conversions."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .config import read_key_values, write_key_values
from .exceptions import GeometryError

PLANES_PER_PACKAGE = 6
PLANE_PITCH = 1.0
PACKAGE_CENTERS = (180.0, 240.0, 300.0, 360.0)
ACTIVE_RADIUS_MIN = 3.0
ACTIVE_RADIUS_MAX = 48.0

ArrayLike = Union[float, np.ndarray]


def wrap_angle(d: ArrayLike) -> ArrayLike:
    """Maps an angle difference to (-pi, pi]."""
    d = np.asarray(d, dtype=np.float64)
    out = d - 2.0 * np.pi * np.ceil((d - np.pi) / (2.0 * np.pi))
    return float(out) if out.ndim == 0 else out


def to_cylindrical(x: ArrayLike, y: ArrayLike) -> tuple[ArrayLike, ArrayLike]:
    """Converts transverse coordinates to (r, phi), phi in (-pi, pi].

    The origin maps to (0, 0).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    phi = np.where(phi <= -np.pi, np.pi, phi)
    phi = np.where(r == 0.0, 0.0, phi)
    if r.ndim == 0:
        return float(r), float(phi)
    return r, phi


@dataclass(frozen=True)
class DetectorGeometry:
    """Planes along the beam axis, grouped in packages.

    Attributes:
        plane_z:
            z position of each plane (cm), strictly increasing.
        package_of_plane:
            package index of each plane.
        active_radius_min, active_radius_max:
            radial acceptance (cm).
    """

    plane_z: tuple[float, ...]
    package_of_plane: tuple[int, ...]
    active_radius_min: float
    active_radius_max: float

    def __post_init__(self):
        z = np.asarray(self.plane_z, dtype=np.float64)
        pkg = np.asarray(self.package_of_plane)
        if z.ndim != 1 or len(z) == 0 or len(z) != len(pkg):
            raise GeometryError("plane_z and package_of_plane must be equally long")
        if not np.all(np.diff(z) > 0):
            raise GeometryError("plane_z must be strictly increasing")
        n_pkg = len(z) // PLANES_PER_PACKAGE
        expected = np.repeat(np.arange(n_pkg), PLANES_PER_PACKAGE)
        if len(z) % PLANES_PER_PACKAGE != 0 or not np.array_equal(pkg, expected):
            raise GeometryError(
                f"packages must hold exactly {PLANES_PER_PACKAGE} consecutive planes"
            )
        gaps = np.diff(z)
        boundary = np.diff(pkg) != 0
        if boundary.any() and gaps[~boundary].max() >= gaps[boundary].min():
            raise GeometryError("intra-package spacing must be below the package gap")
        if not 0.0 <= self.active_radius_min < self.active_radius_max:
            raise GeometryError("need 0 <= active_radius_min < active_radius_max")

    @property
    def n_planes(self) -> int:
        return len(self.plane_z)

    @property
    def n_packages(self) -> int:
        return self.package_of_plane[-1] + 1

    def planes_in_package(self, package: int) -> list[int]:
        return [p for p, k in enumerate(self.package_of_plane) if k == package]

    def in_acceptance(self, r: ArrayLike) -> Union[bool, np.ndarray]:
        r = np.asarray(r)
        ok = (r >= self.active_radius_min) & (r <= self.active_radius_max)
        return bool(ok) if ok.ndim == 0 else ok

    @classmethod
    def from_layout(
        cls,
        package_centers: tuple[float, ...] = PACKAGE_CENTERS,
        plane_pitch: float = PLANE_PITCH,
        planes_per_package: int = PLANES_PER_PACKAGE,
        active_radius_min: float = ACTIVE_RADIUS_MIN,
        active_radius_max: float = ACTIVE_RADIUS_MAX,
    ) -> DetectorGeometry:
        """Builds planes centered on each package at a fixed pitch."""
        if planes_per_package != PLANES_PER_PACKAGE:
            raise GeometryError(f"planes_per_package must be {PLANES_PER_PACKAGE}")
        offsets = (np.arange(planes_per_package) - (planes_per_package - 1) / 2.0) * plane_pitch
        plane_z = tuple(float(c + o) for c in package_centers for o in offsets)
        package_of_plane = tuple(
            k for k in range(len(package_centers)) for _ in range(planes_per_package)
        )
        return cls(
            plane_z=plane_z,
            package_of_plane=package_of_plane,
            active_radius_min=float(active_radius_min),
            active_radius_max=float(active_radius_max),
        )

    @classmethod
    def from_config(cls, section: dict) -> DetectorGeometry:
        """Builds the geometry from the `geometry` configuration section."""
        return cls.from_layout(
            package_centers=tuple(section["package_centers"]),
            plane_pitch=section["plane_pitch"],
            planes_per_package=section["planes_per_package"],
            active_radius_min=section["active_radius_min"],
            active_radius_max=section["active_radius_max"],
        )

    def write(self, path: Union[Path, str]) -> None:
        """Writes the geometry as `key = value` lines."""
        write_key_values(
            path,
            {
                "plane_z": list(self.plane_z),
                "package_of_plane": list(self.package_of_plane),
                "active_radius_min": self.active_radius_min,
                "active_radius_max": self.active_radius_max,
            },
        )

    @classmethod
    def read(cls, path: Union[Path, str]) -> DetectorGeometry:
        values = read_key_values(path)
        try:
            return cls(
                plane_z=tuple(float(z) for z in values["plane_z"]),
                package_of_plane=tuple(int(k) for k in values["package_of_plane"]),
                active_radius_min=float(values["active_radius_min"]),
                active_radius_max=float(values["active_radius_max"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise GeometryError(f'cannot read "{path}": {e}') from e


def default_geometry() -> DetectorGeometry:
    """Returns the canonical 24-plane, 4-package geometry."""
    return DetectorGeometry.from_layout()


@dataclass(frozen=True)
class Hit:
    """One recorded plane crossing.

    `truth_id` is negative for noise hits.
    """

    x: float
    y: float
    z: float
    r: float
    phi: float
    plane: int
    event_id: int
    truth_id: int
    hit_id: int

    @classmethod
    def at(
        cls,
        x: float,
        y: float,
        plane: int,
        geom: DetectorGeometry,
        event_id: int,
        truth_id: int,
        hit_id: int,
    ) -> Hit:
        """Builds a hit on `plane`, deriving z and the cylindrical projection."""
        r, phi = to_cylindrical(x, y)
        return cls(
            x=float(x),
            y=float(y),
            z=geom.plane_z[plane],
            r=r,
            phi=phi,
            plane=int(plane),
            event_id=int(event_id),
            truth_id=int(truth_id),
            hit_id=int(hit_id),
        )
