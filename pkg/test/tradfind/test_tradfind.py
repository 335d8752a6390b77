import math

import numpy as np
import pytest

from pyfdc.exceptions import DegenerateFitError, InvalidConfigError, PreconditionError
from pyfdc.graphbuild import true_segments
from pyfdc.simgen import Event, HelixParams, SimConfig, generate_event
from pyfdc.tradfind import (
    HelixFit,
    Segment,
    TradConfig,
    candidate_edges,
    find_candidates,
    find_segments,
    helical_fit,
    link_segments,
    project_fit,
    projection_threshold,
    run_traditional,
)

from ..test_utils import GEOM, event_from_helices, hit_at, random_events

HELIX = HelixParams(kappa=0.01, phi0=0.3, tan_lambda=20.0)


def package_hits(ev: Event, package: int):
    return [h for h in ev.hits if GEOM.package_of_plane[h.plane] == package]


def test_fit_exact_circle_through_origin():
    hits = [
        hit_at(10.0 + 10.0 * math.cos(t), 10.0 * math.sin(t), plane, hit_id=plane)
        for plane, t in enumerate([2.0, 2.2, 2.4, 2.6, 2.8, 3.0])
    ]
    fit = helical_fit(hits)
    assert fit.x_c == pytest.approx(10.0, abs=1e-9)
    assert fit.y_c == pytest.approx(0.0, abs=1e-9)
    assert fit.r_c == pytest.approx(10.0, abs=1e-9)
    assert fit.residual < 1e-9


def test_fit_free_circle():
    hits = [
        hit_at(5.0 + 3.0 * math.cos(t), 5.0 + 3.0 * math.sin(t), plane, hit_id=plane)
        for plane, t in enumerate([0.0, 0.7, 1.4, 2.1])
    ]
    fit = helical_fit(hits, constrain_origin=False)
    assert fit.center == pytest.approx((5.0, 5.0), abs=1e-9)
    assert fit.r_c == pytest.approx(3.0, abs=1e-9)


def test_fit_recovers_helix():
    ev = event_from_helices([HELIX])
    fit = helical_fit(ev.hits)
    a, b = HELIX.center()
    assert fit.x_c == pytest.approx(a, rel=1e-9)
    assert fit.y_c == pytest.approx(b, rel=1e-9)
    assert fit.r_c == pytest.approx(1.0 / HELIX.kappa, rel=1e-9)
    assert fit.tan_lambda == pytest.approx(HELIX.tan_lambda, rel=1e-9)
    assert fit.turn_sign == 1


def test_negative_curvature_turns_clockwise():
    ev = event_from_helices([HelixParams(kappa=-0.01, phi0=0.3, tan_lambda=20.0)])
    assert helical_fit(ev.hits).turn_sign == -1


def test_project_fit_reproduces_hits():
    ev = event_from_helices([HELIX])
    fit = helical_fit(ev.hits)
    for h in ev.hits:
        x, y = project_fit(fit, h.z)
        assert x == pytest.approx(h.x, abs=1e-6)
        assert y == pytest.approx(h.y, abs=1e-6)


def test_fit_degenerate_points():
    hits = [hit_at(10.0, 5.0, plane, hit_id=plane) for plane in range(3)]
    with pytest.raises(DegenerateFitError):
        helical_fit(hits)
    collinear = [hit_at(float(k), float(k), k, hit_id=k) for k in range(4, 7)]
    with pytest.raises(DegenerateFitError):
        helical_fit(collinear)


def test_fit_needs_three_hits():
    with pytest.raises(PreconditionError):
        helical_fit([hit_at(10.0, 0.0, 0, hit_id=0), hit_at(10.1, 0.0, 1, hit_id=1)])


def test_fit_smeared_tracks():
    cfg = SimConfig(n_tracks_min=1, n_tracks_max=1, hit_efficiency=1.0, noise_hits_mean=0.0, smear_sigma_xy=0.02)
    errors = []
    for i in range(100):
        ev = generate_event(cfg, GEOM, i)
        if len(ev.hits) < 6:
            continue
        fit = helical_fit(ev.hits)
        errors.append(abs(1.0 / fit.r_c - abs(ev.truth_tracks[0].helix.kappa)))
        assert fit.residual < 0.1
    assert len(errors) > 50
    # curvature error in 1/cm, against curvatures of 0.0033 to 0.025
    assert float(np.median(errors)) < 1e-3


def test_six_hit_segment():
    ev = event_from_helices([HELIX])
    segs = find_segments(package_hits(ev, 0), GEOM)
    assert len(segs) == 1
    assert [h.plane for h in segs[0].hits] == list(range(6))
    assert segs[0].package == 0


def test_two_hits_make_no_segment():
    hits = [hit_at(10.0, 0.0, 0, hit_id=0), hit_at(10.1, 0.5, 1, hit_id=1)]
    assert find_segments(hits, GEOM) == []


def test_parallel_tracks_stay_apart():
    ev = event_from_helices(
        [
            HelixParams(kappa=0.01, phi0=0.0, tan_lambda=20.0),
            HelixParams(kappa=0.01, phi0=0.6, tan_lambda=20.0),
        ]
    )
    hits = package_hits(ev, 0)
    first = sorted((h for h in hits if h.plane == 0), key=lambda h: h.truth_id)
    assert 4.0 < math.hypot(first[0].x - first[1].x, first[0].y - first[1].y) < 6.0
    segs = find_segments(hits, GEOM)
    assert len(segs) == 2
    for s in segs:
        assert len(s.hits) == 6
        assert len({h.truth_id for h in s.hits}) == 1


def test_find_segments_single_package_only():
    ev = event_from_helices([HELIX])
    with pytest.raises(PreconditionError):
        find_segments(ev.hits, GEOM)


@pytest.mark.parametrize("r_c, expected", [(100.0, 10.0), (20.0, 25.0), (1000.0, 5.0)])
def test_projection_threshold(r_c, expected):
    assert projection_threshold(r_c) == pytest.approx(expected)


def test_link_two_packages_by_projection():
    ev = event_from_helices([HELIX])
    segs = find_segments(package_hits(ev, 0), GEOM) + find_segments(package_hits(ev, 1), GEOM)
    cands = link_segments(segs, GEOM)
    assert len(cands) == 1
    assert [h.plane for h in cands[0].hits] == list(range(12))


def test_link_falls_back_to_centers():
    steep = HelixParams(kappa=0.01, phi0=0.3, tan_lambda=20.0)
    shallow = HelixParams(kappa=0.01, phi0=0.3, tan_lambda=10.0)
    s0 = find_segments(package_hits(event_from_helices([steep]), 0), GEOM)
    s1 = find_segments(package_hits(event_from_helices([shallow]), 1), GEOM)
    z = GEOM.plane_z[6]
    px, py = project_fit(s0[0].fit, z)
    qx, qy = project_fit(s1[0].fit, z)
    assert (px - qx) ** 2 + (py - qy) ** 2 > projection_threshold(s0[0].fit.r_c)
    cands = link_segments(s0 + s1, GEOM)
    assert len(cands) == 1
    assert len(cands[0].segments) == 2


def test_unrelated_segments_are_not_linked():
    a = HelixParams(kappa=0.01, phi0=0.3, tan_lambda=20.0)
    b = HelixParams(kappa=-0.02, phi0=2.5, tan_lambda=20.0)
    s0 = find_segments(package_hits(event_from_helices([a]), 0), GEOM)
    s1 = find_segments(package_hits(event_from_helices([b]), 1), GEOM)
    assert len(link_segments(s0 + s1, GEOM)) == 2


def test_clean_track_is_found_exactly():
    ev = event_from_helices([HELIX])
    edges = run_traditional(ev, GEOM)
    assert len(edges) == 23
    assert edges == true_segments(ev, truth_skip_max=3)


def test_clean_tracks_are_separated():
    ev = event_from_helices(
        [HELIX, HelixParams(kappa=-0.015, phi0=-2.0, tan_lambda=15.0)]
    )
    cands = find_candidates(ev, GEOM)
    assert len(cands) == 2
    assert run_traditional(ev, GEOM) == true_segments(ev, truth_skip_max=3)


def test_empty_event():
    assert run_traditional(Event(event_id=3, hits=[]), GEOM) == set()


def test_trad_config_validation():
    with pytest.raises(InvalidConfigError):
        TradConfig(min_hits=2)
    with pytest.raises(InvalidConfigError):
        TradConfig(d2_min=30.0)
    assert TradConfig.from_config({"proximity": 1.5, "other": 0}).proximity == 1.5


def test_fit_center_within_propagated_errors():
    sigma = 0.02
    cfg = SimConfig(
        n_tracks_min=1, n_tracks_max=1, hit_efficiency=1.0, noise_hits_mean=0.0,
        smear_sigma_xy=sigma,
    )
    n_fits = 0
    for i in range(1000):
        ev = generate_event(cfg, GEOM, i)
        if len(ev.hits) < 6:
            continue
        fit = helical_fit(ev.hits)
        x = np.array([h.x for h in ev.hits])
        y = np.array([h.y for h in ev.hits])
        A = np.stack([2.0 * x, 2.0 * y], axis=1)
        # each row residual x^2 + y^2 - 2 x_c x - 2 y_c y moves by 2 r_c sigma
        cov = 4.0 * fit.r_c**2 * sigma**2 * np.linalg.inv(A.T @ A)
        a, b = ev.truth_tracks[0].helix.center()
        assert abs(fit.x_c - a) < 5.0 * math.sqrt(cov[0, 0]), i
        assert abs(fit.y_c - b) < 5.0 * math.sqrt(cov[1, 1]), i
        n_fits += 1
    assert n_fits > 900


def test_candidates_share_no_hits():
    for ev in random_events(30):
        cands = find_candidates(ev, GEOM)
        ids = [h.hit_id for c in cands for h in c.hits]
        assert len(ids) == len(set(ids))
        for c in cands:
            assert all(s.package < t.package for s, t in zip(c.segments[:-1], c.segments[1:]))


def split_track_segments():
    """Four segments of one helix; the second carries a fit that leaves the
    track after its own package, so the first pass links 0-1 and 2-3 only."""
    ev = event_from_helices([HELIX])
    segs = [find_segments(package_hits(ev, k), GEOM)[0] for k in range(4)]
    p = next(h for h in ev.hits if h.plane == 6)
    # tight, slow helix through the same point, its center far from the track's
    x_c, y_c = p.x + 20.0, p.y
    off = HelixFit(
        x_c=x_c, y_c=y_c, r_c=20.0, tan_lambda=2.0, residual=0.0, turn_sign=1,
        theta0=math.atan2(p.y - y_c, p.x - x_c), z0=p.z,
    )
    segs[1] = Segment(package=1, hits=segs[1].hits, fit=off)
    return ev, segs


def test_recovery_merges_linked_candidates():
    ev, segs = split_track_segments()
    z = GEOM.plane_z[12]
    px, py = project_fit(segs[1].fit, z)
    qx, qy = project_fit(segs[2].fit, z)
    assert (px - qx) ** 2 + (py - qy) ** 2 > projection_threshold(segs[1].fit.r_c)
    cands = link_segments(segs, GEOM)
    assert len(cands) == 1
    assert [s.package for s in cands[0].segments] == [0, 1, 2, 3]
    assert [h.plane for h in cands[0].hits] == list(range(24))
    assert candidate_edges(0, cands) == true_segments(ev, truth_skip_max=3)


def test_recovery_absorbs_isolated_segment():
    _, segs = split_track_segments()
    cands = link_segments(segs[:3], GEOM)
    assert len(cands) == 1
    assert [s.package for s in cands[0].segments] == [0, 1, 2]
