import pytest

from partsim.errors import GeometryError
from partsim.families import build_template
from partsim.models import BRepPart, Curve, CurveGeometry, Edge, Face, PartGraph, SurfaceGeometry
from partsim.topology import build_graph, subgraph, to_graph

LINE = CurveGeometry(kind='line', start=(0, 0, 0), end=(1, 0, 0))


def planar_faces(*ids):
    return tuple(Face(id=i, surface=SurfaceGeometry(kind='plane'), uv_domain=(0, 1, 0, 1)) for i in ids)


def test_box_gives_six_nodes_twelve_edges_degree_four(box):
    graph, report = build_graph(box)
    assert len(graph.nodes) == 6
    assert len(graph.edges) == 12
    assert all(graph.degree(node) == 4 for node in graph.nodes)
    assert report.skipped == 0 and not report.duplicate_edges


def test_capped_cylinder_skips_its_seam(cylinder):
    graph, report = build_graph(cylinder)
    assert len(graph.nodes) == 3
    assert len(graph.edges) == 2
    assert len(report.seam_curves) == 1
    assert report.to_dict()['edges'] == 2


def test_curve_shared_by_three_faces_gives_pairwise_edges():
    part = BRepPart(id='fan', faces=planar_faces('A', 'B', 'C'),
                    curves=(Curve(id='C0', geometry=LINE, adjacent_faces=('A', 'B', 'C')),))
    graph, report = build_graph(part)
    assert {(e.u, e.v) for e in graph.edges} == {('A', 'B'), ('A', 'C'), ('B', 'C')}
    assert report.multi_face_curves == ['C0']


def test_parallel_curves_collapse_to_one_edge():
    part = BRepPart(id='twin', faces=planar_faces('A', 'B'), curves=(
        Curve(id='C0', geometry=LINE, adjacent_faces=('B', 'A')),
        Curve(id='C1', geometry=LINE, adjacent_faces=('A', 'B')),
    ))
    graph, report = build_graph(part)
    assert graph.edges == (Edge(u='A', v='B', curve_id='C0'),)
    assert report.duplicate_edges == [{'curve': 'C1', 'kept': 'C0', 'faces': ['A', 'B']}]


def test_free_curves_are_reported():
    part = BRepPart(id='loose', faces=planar_faces('A'), curves=(Curve(id='C0', geometry=LINE),))
    graph, report = build_graph(part)
    assert graph.edges == ()
    assert report.free_curves == ['C0']


def test_graph_node_order_follows_faces(box):
    assert to_graph(box).nodes == tuple(face.id for face in box.faces)


def test_l_bracket_has_eight_faces():
    part = build_template('b', 'l_bracket', {'length': 2.0, 'width': 1.5, 'height': 1.0, 'thickness': 0.2})
    graph = to_graph(part)
    assert len(graph.nodes) == 8
    assert len(graph.edges) == 18


def test_ring_has_two_walls_and_two_seams():
    part = build_template('r', 'ring', {'outer_radius': 1.0, 'inner_radius': 0.5, 'height': 0.2})
    graph, report = build_graph(part)
    assert len(graph.nodes) == 4
    assert len(graph.edges) == 4
    assert len(report.seam_curves) == 2


def test_subgraph_keeps_only_internal_edges(box):
    graph = to_graph(box)
    keep = {'F0', 'F2', 'F3'}
    sub = subgraph(graph, keep)
    assert set(sub.nodes) == keep
    assert all(e.u in keep and e.v in keep for e in sub.edges)
    assert len(sub.edges) == 3


def test_graph_rejects_dangling_edges():
    with pytest.raises(GeometryError):
        PartGraph(part_id='g', nodes=('A',), edges=(Edge(u='A', v='B', curve_id='C0'),))
