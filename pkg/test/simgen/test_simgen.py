import json

import pytest

from pyfdc.exceptions import InvalidConfigError, PreconditionError
from pyfdc.simgen import (
    NOISE_TRUTH_ID,
    HelixParams,
    SimConfig,
    generate_dataset,
    generate_event,
    read_events,
    split_sizes,
    track_crossings,
    write_events,
)

from ..test_utils import GEOM, clean_config


def test_clean_single_track_gives_24_hits():
    cfg = clean_config()
    p = HelixParams(kappa=0.01, phi0=0.4, tan_lambda=20.0)
    ev = generate_event(cfg, GEOM, 0, helices=[p])
    assert len(ev.hits) == 24
    assert len(ev.truth_tracks) == 1
    assert len(ev.truth_tracks[0].hit_ids) == 24


def test_clean_hits_reproduce_crossings():
    cfg = clean_config()
    p = HelixParams(kappa=-0.02, phi0=2.0, tan_lambda=15.0)
    ev = generate_event(cfg, GEOM, 3, helices=[p])
    expected = track_crossings(p, GEOM)
    got = sorted((h.plane, h.x, h.y) for h in ev.hits)
    assert got == expected


def test_recorded_fraction_matches_efficiency():
    cfg = SimConfig(
        n_tracks_min=1, n_tracks_max=1, hit_efficiency=0.9, noise_hits_mean=0.0,
        smear_sigma_xy=0.0,
    )
    recorded = crossed = 0
    for i in range(10_000):
        ev = generate_event(cfg, GEOM, i)
        t = ev.truth_tracks[0]
        recorded += len(t.hit_ids)
        crossed += len(track_crossings(t.helix, GEOM))
    assert 0.893 <= recorded / crossed <= 0.907


def test_same_seed_same_event():
    cfg = SimConfig()
    a = json.dumps(generate_event(cfg, GEOM, 42).to_dict())
    b = json.dumps(generate_event(cfg, GEOM, 42).to_dict())
    assert a == b


def test_events_independent_of_generation_order():
    cfg = SimConfig()
    forward = [generate_event(cfg, GEOM, i).to_dict() for i in range(5)]
    backward = [generate_event(cfg, GEOM, i).to_dict() for i in reversed(range(5))]
    assert forward == backward[::-1]


def test_event_invariants():
    cfg = SimConfig(noise_hits_mean=5.0)
    for i in range(50):
        ev = generate_event(cfg, GEOM, i)
        planes = {h.hit_id: h.plane for h in ev.hits}
        owners: dict[int, int] = {}
        for t in ev.truth_tracks:
            tp = [planes[hid] for hid in t.hit_ids]
            assert tp == sorted(set(tp))
            for hid in t.hit_ids:
                assert hid not in owners
                owners[hid] = t.truth_id
        for h in ev.hits:
            assert GEOM.in_acceptance(h.r)
            assert h.z == GEOM.plane_z[h.plane]
            if h.truth_id == NOISE_TRUTH_ID:
                assert h.hit_id not in owners
            else:
                assert owners[h.hit_id] == h.truth_id
        assert sorted(planes) == list(range(len(ev.hits)))


def test_sim_config_validation():
    with pytest.raises(InvalidConfigError):
        SimConfig(hit_efficiency=0.0)
    with pytest.raises(InvalidConfigError):
        SimConfig(smear_sigma_xy=-1.0)


def test_split_sizes_large():
    n_train, n_val, n_test = split_sizes(90842, (0.7, 0.15, 0.15))
    assert n_train + n_val + n_test == 90842
    assert abs(n_train - 63590) <= 1
    assert abs(n_val - 13626) <= 1
    assert abs(n_test - 13626) <= 1


def test_split_sizes_small():
    assert split_sizes(10, (0.8, 0.1, 0.1)) == (8, 1, 1)


def test_split_sizes_preconditions():
    with pytest.raises(PreconditionError):
        split_sizes(2, (0.7, 0.15, 0.15))
    with pytest.raises(PreconditionError):
        split_sizes(10, (0.7, 0.2, 0.2))


def test_generate_dataset_partition():
    train, val, test = generate_dataset(SimConfig(), GEOM, 20, (0.7, 0.15, 0.15))
    ids = [ev.event_id for ev in train + val + test]
    assert sorted(ids) == list(range(20))
    assert len(set(ids)) == 20
    assert (len(train), len(val), len(test)) == split_sizes(20, (0.7, 0.15, 0.15))


def test_write_read_events(tmp_path):
    events = [generate_event(SimConfig(), GEOM, i) for i in range(3)]
    path = tmp_path / "events.jsonl"
    assert write_events(path, events) == 3
    back = read_events(path)
    assert [ev.to_dict() for ev in back] == [ev.to_dict() for ev in events]
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == ["event_id", "hits", "tracks"]
    assert list(first["hits"][0]) == ["hit_id", "x", "y", "z", "plane", "truth_id"]
