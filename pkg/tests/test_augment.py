import logging
import math
from dataclasses import replace
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partsim.augment import (SCHEMES, AugmentConfig, augment_pair, draw_feature_mask, draw_removal, drop_structure,
                             mask_features, removal_target, view_rng)
from partsim.errors import ConfigError
from partsim.families import extrude_profile
from partsim.features import AttrSchema, featurize
from partsim.models import BRepPart, Edge, PartGraph
from partsim.topology import subgraph


def complete_graph(n):
    nodes = [f'F{i}' for i in range(n)]
    edges = [Edge(u=a, v=b, curve_id=f'C{k}') for k, (a, b) in enumerate(combinations(nodes, 2))]
    return PartGraph(part_id=f'K{n}', nodes=tuple(nodes), edges=tuple(edges))


@st.composite
def graphs(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    nodes = [f'F{i}' for i in range(n)]
    drawn = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=60))
    pairs = {(min(a, b), max(a, b)) for a, b in drawn if a != b}
    edges = tuple(Edge(u=nodes[a], v=nodes[b], curve_id=f'C{a}_{b}') for a, b in sorted(pairs))
    return PartGraph(part_id='g', nodes=tuple(nodes), edges=edges)


@pytest.mark.parametrize('n, beta, expected', [(10, 0.1, 1), (20, 0.1, 2), (5, 0.1, 1), (4, 0.2, 1),
                                               (1, 0.2, 0), (3, 0.0, 0), (15, 0.1, 2)])
def test_removal_target_rounds_half_up(n, beta, expected):
    assert removal_target(n, beta) == expected


def test_node_scheme_on_ten_nodes_keeps_nine():
    removed, record = draw_removal(complete_graph(10), 0.1, 'Node', np.random.default_rng(0))
    assert len(removed) == 1
    assert record['overshoot'] == 0
    assert len(subgraph(complete_graph(10), set(complete_graph(10).nodes) - removed).nodes) == 9


def test_edge_vertices_on_k4_leaves_k2(caplog):
    graph = complete_graph(4)
    with caplog.at_level(logging.WARNING, logger='partsim.augment'):
        removed, record = draw_removal(graph, 0.2, 'EdgeVertices', np.random.default_rng(3))
    remaining = subgraph(graph, set(graph.nodes) - removed)
    assert len(remaining.nodes) == 2
    assert len(remaining.edges) == 1
    assert record['target'] == 1 and record['overshoot'] == 1
    assert 'removed 2 nodes for target 1' in caplog.text


@settings(max_examples=1000, deadline=None)
@given(graph=graphs(), beta=st.sampled_from([0.1, 0.2]), scheme=st.sampled_from(SCHEMES),
       seed=st.integers(0, 2 ** 32 - 1))
def test_removal_keeps_a_valid_nonempty_subgraph(graph, beta, scheme, seed):
    removed, record = draw_removal(graph, beta, scheme, np.random.default_rng(seed))
    m = removal_target(len(graph.nodes), beta)
    assert removed <= set(graph.nodes)
    if scheme == 'Node':
        assert len(removed) == m
    else:
        assert len(removed) >= m
    kept = subgraph(graph, set(graph.nodes) - removed)
    assert len(kept.nodes) >= 1
    assert all(e.u in kept.nodes and e.v in kept.nodes for e in kept.edges)
    assert record['removed'] == len(removed)


def test_drop_structure_slices_payloads(small_dataset):
    gf = small_dataset[0]
    records = []
    view = drop_structure(gf, 0.2, 'Node', np.random.default_rng(1), records)
    assert len(view.graph.nodes) == len(gf.graph.nodes) - records[0]['removed']
    for row, node in enumerate(view.graph.nodes):
        np.testing.assert_array_equal(view.face_grids[row], gf.face_grids[gf.graph.nodes.index(node)])
    for row, edge in enumerate(view.graph.edges):
        np.testing.assert_array_equal(view.curve_grids[row], gf.curve_grids[gf.graph.edges.index(edge)])


def test_masking_extremes(small_dataset):
    gf = small_dataset[0]
    assert mask_features(gf, 0.0, np.random.default_rng(0)) is gf
    blank = mask_features(gf, 1.0, np.random.default_rng(0))
    for name in ('face_grids', 'face_geo', 'face_product', 'curve_grids', 'curve_geo'):
        assert not getattr(blank, name).any()
    assert blank.graph == gf.graph
    np.testing.assert_array_equal(blank.face_types, gf.face_types)


@pytest.mark.parametrize('granularity', ['group', 'scalar'])
def test_masking_only_zeroes(small_dataset, granularity):
    gf = small_dataset[1]
    masked = mask_features(gf, 0.2, np.random.default_rng(4), granularity)
    for name in ('face_grids', 'face_geo', 'face_product', 'curve_grids', 'curve_geo'):
        before, after = getattr(gf, name), getattr(masked, name)
        assert np.all((after == before) | (after == 0))


def test_views_are_reproducible(small_dataset):
    cfg = AugmentConfig(alpha=0.2, beta=0.2, scheme='Node1Hop', seed=9)
    gf = small_dataset[2]
    first, second = augment_pair(gf, cfg, epoch=3), augment_pair(gf, cfg, epoch=3)
    assert first[0].equals(second[0]) and first[1].equals(second[1])
    for view in first:
        assert set(view.graph.nodes) <= set(gf.graph.nodes)
        assert set(view.graph.edges) <= set(gf.graph.edges)


def test_view_streams_are_independent():
    a = view_rng(0, 'part-1', 1, 0).random(4)
    assert not np.array_equal(a, view_rng(0, 'part-1', 1, 1).random(4))
    assert not np.array_equal(a, view_rng(0, 'part-2', 1, 0).random(4))
    np.testing.assert_array_equal(a, view_rng(0, 'part-1', 1, 0).random(4))


def test_audit_records_carry_epoch_and_view(small_dataset):
    records = []
    augment_pair(small_dataset[0], AugmentConfig(beta=0.2, scheme='EdgeVertices'), epoch=5, records=records)
    assert [(r['epoch'], r['view']) for r in records] == [(5, 0), (5, 1)]
    assert all(r['scheme'] == 'EdgeVertices' for r in records)


@pytest.mark.parametrize('kwargs', [{'alpha': 0.3}, {'beta': -0.1}, {'scheme': 'Edge'}, {'granularity': 'row'}])
def test_invalid_augment_config(kwargs):
    with pytest.raises(ConfigError):
        AugmentConfig(**kwargs).validate()


def test_group_mask_rate_follows_alpha():
    node_mask, edge_mask = draw_feature_mask(2000, 2000, 0.1, np.random.default_rng(12))
    groups = np.concatenate([node_mask.ravel(), edge_mask.ravel()])
    assert groups.size == 10_000
    assert groups.mean() == pytest.approx(0.1, abs=0.01)


@pytest.fixture(scope='module')
def prism_features():
    """An 18-sided prism: 20 faces."""
    polygon = [(math.cos(t), math.sin(t)) for t in np.linspace(0.0, 2 * math.pi, 18, endpoint=False)]
    part = extrude_profile('prism-18', polygon, [], 0.5)
    faces = tuple(replace(face, attrs={'material': 'steel', 'roughness': 1.0 + i}) for i, face in enumerate(part.faces))
    part = BRepPart(id=part.id, faces=faces, curves=part.curves)
    features, _ = featurize(part, AttrSchema.fit([part]), (4, 4), 4)
    return features


def test_pair_views_of_twenty_nodes_keep_eighteen(prism_features):
    assert len(prism_features.graph.nodes) == 20
    cfg = AugmentConfig(alpha=0.1, beta=0.1, seed=3)
    for epoch in range(500):
        for view in augment_pair(prism_features, cfg, epoch=epoch):
            assert len(view.graph.nodes) == 18
