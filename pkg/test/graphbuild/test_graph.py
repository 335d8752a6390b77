import numpy as np
import pytest

from pyfdc.exceptions import GraphEventMismatchError, InvalidConfigError, PreconditionError
from pyfdc.graphbuild import (
    CutConfig,
    EventGraph,
    build_batched_graph,
    build_event_graph,
    build_labeled_graphs,
    builder_metrics,
    candidate_pairs,
    concat_graphs,
    gap_histogram,
    label_edges,
    prune_redundant_edges,
    read_graphs,
    segment_mask,
    true_segments,
    write_graphs,
)
from pyfdc.simgen import NOISE_TRUTH_ID, Event, HelixParams

from ..test_utils import GEOM, event_from_helices, hit_at, random_events

HELIX = HelixParams(kappa=0.01, phi0=0.5, tan_lambda=20.0)


def assert_same_graph(g1: EventGraph, g2: EventGraph):
    np.testing.assert_array_equal(g1.X, g2.X)
    np.testing.assert_array_equal(g1.E, g2.E)
    np.testing.assert_array_equal(g1.node_plane, g2.node_plane)
    np.testing.assert_array_equal(g1.node_event, g2.node_event)
    np.testing.assert_array_equal(g1.node_hit_id, g2.node_hit_id)


def test_skip_edges_recover_missing_plane():
    ev = event_from_helices([HELIX], drop={0: [7]})
    no_skip = build_event_graph(ev, CutConfig(skip_max=0), GEOM)
    with_skip = build_event_graph(ev, CutConfig(skip_max=2), GEOM)
    m0 = builder_metrics([no_skip], [ev], truth_skip_max=3)
    m2 = builder_metrics([with_skip], [ev], truth_skip_max=3)
    assert m0.true_total == m2.true_total == 22
    assert m0.efficiency < 1.0
    assert m2.efficiency == 1.0


def test_true_segments_respect_truth_skip():
    ev = event_from_helices([HELIX], drop={0: [7, 8, 9, 10]})
    plane = {h.hit_id: h.plane for h in ev.hits}
    segs = true_segments(ev, truth_skip_max=3)
    assert len(segs) == 18
    assert all(plane[b] - plane[a] <= 4 for _, a, b in segs)
    assert len(true_segments(ev, truth_skip_max=4)) == 19


def test_single_hit_graph():
    ev = Event(event_id=0, hits=[hit_at(10.0, 0.0, 3, hit_id=0)])
    g = build_event_graph(ev, CutConfig(), GEOM)
    assert g.n_nodes == 1
    assert g.n_edges == 0
    assert g.E.shape == (0, 2)
    g.validate(skip_max=3)


def test_empty_event_graph():
    g = build_event_graph(Event(event_id=4, hits=[]), CutConfig(), GEOM)
    assert g.n_nodes == 0
    assert g.X.shape == (0, 3)
    assert g.E.shape == (0, 2)


def test_node_features_and_order():
    ev = random_events(1)[0]
    g = build_event_graph(ev, CutConfig(), GEOM)
    by_id = {h.hit_id: h for h in ev.hits}
    keys = list(zip(g.node_plane.tolist(), g.node_hit_id.tolist()))
    assert keys == sorted(keys)
    for i, hid in enumerate(g.node_hit_id.tolist()):
        h = by_id[hid]
        assert g.X[i].tolist() == [h.r, h.phi, GEOM.plane_z[h.plane]]
    assert [tuple(e) for e in g.E.tolist()] == sorted(tuple(e) for e in g.E.tolist())


def test_edges_satisfy_invariants():
    cuts = CutConfig()
    for ev in random_events(20):
        g = build_event_graph(ev, cuts, GEOM)
        g.validate(skip_max=cuts.skip_max)


def test_batched_graph_matches_individual_builds():
    events = [ev for ev in random_events(128) if ev.hits]
    cuts = CutConfig()
    batched = build_batched_graph(events, cuts, GEOM)
    parts = batched.split_by_event()
    assert [p.event_ids() for p in parts] == [[ev.event_id] for ev in events]
    for ev, part in zip(events, parts):
        assert_same_graph(part, build_event_graph(ev, cuts, GEOM))


def test_batch_of_one_equals_single_build():
    ev = random_events(1, first=9)[0]
    assert_same_graph(build_batched_graph([ev], CutConfig(), GEOM), build_event_graph(ev, CutConfig(), GEOM))


def test_batch_edges_are_union_of_events():
    e1, e2 = random_events(2, first=30)
    cuts = CutConfig()
    g = build_batched_graph([e1, e2], cuts, GEOM)
    union = set(build_event_graph(e1, cuts, GEOM).edge_keys()) | set(
        build_event_graph(e2, cuts, GEOM).edge_keys()
    )
    assert set(g.edge_keys()) == union
    src, dst = g.E[:, 0], g.E[:, 1]
    assert np.all(g.node_event[src] == g.node_event[dst])


def test_batch_rejects_duplicate_event_ids():
    ev = random_events(1)[0]
    with pytest.raises(PreconditionError):
        build_batched_graph([ev, ev], CutConfig(), GEOM)


def test_concat_graphs_matches_batched_build():
    events = random_events(5, first=100)
    cuts = CutConfig()
    assert_same_graph(
        concat_graphs([build_event_graph(ev, cuts, GEOM) for ev in events]),
        build_batched_graph(events, cuts, GEOM),
    )


def test_looser_cuts_give_more_edges():
    tight = CutConfig(max_dxy=10.0, max_dxy_over_dz=2.0, max_abs_dphi=1.0, skip_max=1)
    loose = CutConfig()
    for ev in random_events(10):
        small = set(build_event_graph(ev, tight, GEOM).edge_keys())
        large = set(build_event_graph(ev, loose, GEOM).edge_keys())
        assert small <= large


def test_labels_same_particle_and_noise():
    hits = [
        hit_at(10.0, 0.0, 0, hit_id=0, truth_id=0),
        hit_at(10.1, 0.0, 1, hit_id=1, truth_id=0),
        hit_at(20.0, 0.0, 0, hit_id=2, truth_id=NOISE_TRUTH_ID),
        hit_at(20.1, 0.0, 1, hit_id=3, truth_id=NOISE_TRUTH_ID),
    ]
    ev = Event(event_id=0, hits=hits)
    g = build_event_graph(ev, CutConfig(max_dxy=1.0), GEOM)
    labels = dict(zip([k[1:] for k in g.edge_keys()], label_edges(g, ev).tolist()))
    assert labels == {(0, 1): True, (2, 3): False}


def test_label_mismatch_raises():
    ev = random_events(1)[0]
    g = build_event_graph(ev, CutConfig(), GEOM)
    other = Event(event_id=ev.event_id, hits=ev.hits[:-1])
    with pytest.raises(GraphEventMismatchError):
        label_edges(g, other)


def test_validate_rejects_backward_edge():
    ev = event_from_helices([HELIX])
    g = build_event_graph(ev, CutConfig(), GEOM)
    g.E = g.E[:, ::-1].copy()
    with pytest.raises(PreconditionError):
        g.validate()


def test_segment_mask_on_clean_track():
    ev = event_from_helices([HELIX])
    g = build_labeled_graphs([ev], CutConfig(), GEOM)[0]
    mask, n_seg = segment_mask(g, ev, truth_skip_max=3)
    assert n_seg == 23
    assert int(mask.sum()) == 23
    assert np.all(g.labels[mask])


def test_pair_table_agrees_with_builder():
    events = random_events(20)
    table = candidate_pairs(events, GEOM, max_gap=7, truth_skip_max=3)
    for cuts in (CutConfig(), CutConfig(max_dxy=5.0, max_dxy_over_dz=1.0, max_abs_dphi=0.5, skip_max=1)):
        graphs = build_labeled_graphs(events, cuts, GEOM)
        assert table.metrics(cuts) == builder_metrics(graphs, events, truth_skip_max=3)


def test_prune_redundant_edges():
    E = np.array([[0, 1], [1, 2], [0, 2], [2, 3]])
    keep = prune_redundant_edges(E, np.ones(4, dtype=bool))
    assert keep.tolist() == [True, True, False, True]
    keep = prune_redundant_edges(E, np.array([True, False, True, True]))
    assert keep.tolist() == [True, False, True, True]


def test_gap_histogram():
    ev = event_from_helices([HELIX], drop={0: [7]})
    assert gap_histogram([ev]) == {0: 21, 1: 1}


def test_cut_config_validation():
    with pytest.raises(InvalidConfigError):
        CutConfig(max_dxy=0.0)
    with pytest.raises(InvalidConfigError):
        CutConfig(skip_max=24)
    assert CutConfig(skip_max=2).max_plane_gap == 3


def test_cut_config_write_read(tmp_path):
    cuts = CutConfig(max_dxy=12.5, max_dxy_over_dz=3.25, max_abs_dphi=0.75, skip_max=2)
    cuts.write(tmp_path / "cuts.txt")
    assert CutConfig.read(tmp_path / "cuts.txt") == cuts


def test_write_read_graphs(tmp_path):
    events = random_events(3)
    graphs = build_labeled_graphs(events, CutConfig(), GEOM)
    write_graphs(tmp_path / "graphs.jsonl", graphs)
    back = read_graphs(tmp_path / "graphs.jsonl")
    for g, b in zip(graphs, back):
        assert_same_graph(g, b)
        np.testing.assert_array_equal(g.labels, b.labels)
