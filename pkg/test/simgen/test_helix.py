import math

import numpy as np
import pytest

from pyfdc.exceptions import PreconditionError
from pyfdc.simgen import HelixParams, helix_xy, propagate_helix, track_crossings

from ..test_utils import GEOM


def rk4_xy(kappa, phi0, s_total, n_steps=20000):
    """Integrates dx/ds = u, du/ds = kappa * rot90(u) from the origin, vectorized over draws."""
    kappa = np.asarray(kappa, dtype=np.float64)
    h = np.asarray(s_total, dtype=np.float64) / n_steps
    x = np.zeros_like(kappa)
    y = np.zeros_like(kappa)
    ux = np.cos(phi0) * np.ones_like(kappa)
    uy = np.sin(phi0) * np.ones_like(kappa)

    def f(ux, uy):
        return ux, uy, -kappa * uy, kappa * ux

    for _ in range(n_steps):
        k1 = f(ux, uy)
        k2 = f(ux + 0.5 * h * k1[2], uy + 0.5 * h * k1[3])
        k3 = f(ux + 0.5 * h * k2[2], uy + 0.5 * h * k2[3])
        k4 = f(ux + h * k3[2], uy + h * k3[3])
        x = x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        y = y + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        ux, uy = (
            ux + h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
            uy + h / 6.0 * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3]),
        )
    return x, y


def test_straight_line_limit():
    p = HelixParams(kappa=0.0, phi0=0.0, tan_lambda=1.0)
    x, y = propagate_helix(p, 10.0, GEOM)
    assert x == pytest.approx(10.0, abs=1e-12)
    assert y == pytest.approx(0.0, abs=1e-12)


def test_matches_rk4_single():
    p = HelixParams(kappa=0.01, phi0=0.3, tan_lambda=2.0)
    x, y = propagate_helix(p, 50.0, GEOM)
    xr, yr = rk4_xy(np.array([0.01]), 0.3, np.array([25.0]))
    assert x == pytest.approx(xr[0], abs=1e-6)
    assert y == pytest.approx(yr[0], abs=1e-6)


def test_matches_rk4_random_draws():
    rng = np.random.default_rng(11)
    n = 1000
    kappa = rng.choice([-1.0, 1.0], n) * rng.uniform(1 / 300, 1 / 40, n)
    phi0 = rng.uniform(-np.pi, np.pi, n)
    tan_lambda = rng.uniform(8.0, 40.0, n)
    z = rng.uniform(GEOM.plane_z[0], GEOM.plane_z[-1], n)
    xr, yr = rk4_xy(kappa, phi0, z / tan_lambda)
    for i in range(n):
        x, y = helix_xy(HelixParams(kappa[i], phi0[i], tan_lambda[i]), z[i])
        assert abs(x - xr[i]) < 1e-6 and abs(y - yr[i]) < 1e-6, i


def test_through_origin_circle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = HelixParams(
            kappa=float(rng.choice([-1, 1]) * rng.uniform(1 / 300, 1 / 40)),
            phi0=float(rng.uniform(-np.pi, np.pi)),
            tan_lambda=float(rng.uniform(8.0, 40.0)),
        )
        a, b = p.center()
        for _, x, y in track_crossings(p, GEOM):
            assert abs((x - a) ** 2 + (y - b) ** 2 - (a * a + b * b)) < 1e-9 * max(1.0, a * a + b * b)


def test_positive_kappa_turns_counter_clockwise():
    p = HelixParams(kappa=0.02, phi0=0.0, tan_lambda=10.0)
    _, y = helix_xy(p, 200.0)
    assert y > 0.0


def test_outside_acceptance_is_no_crossing():
    p = HelixParams(kappa=0.0, phi0=0.0, tan_lambda=1.0)
    assert propagate_helix(p, 100.0, GEOM) is None


def test_upstream_of_vertex_rejected():
    p = HelixParams(kappa=0.01, phi0=0.0, tan_lambda=10.0, z0=200.0)
    with pytest.raises(PreconditionError):
        helix_xy(p, 100.0)


def test_track_crossings_all_planes():
    p = HelixParams(kappa=0.01, phi0=1.0, tan_lambda=20.0)
    crossings = track_crossings(p, GEOM)
    assert [c[0] for c in crossings] == list(range(24))
    for _, x, y in crossings:
        assert GEOM.in_acceptance(math.hypot(x, y))


def test_track_stops_when_leaving_acceptance():
    p = HelixParams(kappa=0.0, phi0=0.0, tan_lambda=5.0)
    planes = [c[0] for c in track_crossings(p, GEOM)]
    # s = z / 5 exceeds 48 cm after z = 240 cm
    assert planes == [pl for pl in range(24) if GEOM.plane_z[pl] / 5.0 <= 48.0]
