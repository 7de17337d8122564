"""
BRep to face-adjacency graph conversion.
"""

import logging
from dataclasses import asdict, dataclass, field
from itertools import combinations

from partsim.models import BRepPart, Edge, PartGraph

logger = logging.getLogger(__name__)


@dataclass
class ConversionReport:
    """What the conversion of one part did with each curve."""
    part_id: str
    nodes: int = 0
    edges: int = 0
    seam_curves: list = field(default_factory=list)
    free_curves: list = field(default_factory=list)
    multi_face_curves: list = field(default_factory=list)
    duplicate_edges: list = field(default_factory=list)

    @property
    def skipped(self):
        return len(self.seam_curves) + len(self.free_curves)

    def to_dict(self):
        return asdict(self)


def build_graph(part: BRepPart):
    """Convert a part to its graph and report skipped or merged curves.

    One node per face. A curve with two adjacent faces gives one edge, a curve
    with one adjacent face (seam) or none gives no edge, and a curve shared by
    n > 2 faces gives an edge for every pair. When several curves connect the
    same pair of faces the first curve in part order names the edge.
    """
    report = ConversionReport(part_id=part.id, nodes=len(part.faces))
    edges = []
    seen = {}
    for curve in part.curves:
        adjacent = curve.adjacent_faces
        if len(adjacent) == 0:
            report.free_curves.append(curve.id)
            continue
        if len(adjacent) == 1:
            report.seam_curves.append(curve.id)
            continue
        if len(adjacent) > 2:
            report.multi_face_curves.append(curve.id)
        for a, b in combinations(adjacent, 2):
            u, v = (a, b) if a < b else (b, a)
            if (u, v) in seen:
                report.duplicate_edges.append({'curve': curve.id, 'kept': seen[(u, v)], 'faces': [u, v]})
                continue
            seen[(u, v)] = curve.id
            edges.append(Edge(u=u, v=v, curve_id=curve.id))
    report.edges = len(edges)
    if report.skipped or report.duplicate_edges:
        logger.debug(
            f'{part.id}: {len(report.seam_curves)} seam, {len(report.free_curves)} free curves skipped, '
            f'{len(report.duplicate_edges)} duplicate edges merged'
        )
    graph = PartGraph(part_id=part.id, nodes=tuple(f.id for f in part.faces), edges=tuple(edges))
    return graph, report


def to_graph(part: BRepPart) -> PartGraph:
    graph, _ = build_graph(part)
    return graph


def subgraph(graph: PartGraph, keep) -> PartGraph:
    """Induced subgraph on the nodes in `keep`, preserving node and edge order."""
    keep = set(keep)
    nodes = tuple(n for n in graph.nodes if n in keep)
    edges = tuple(e for e in graph.edges if e.u in keep and e.v in keep)
    return PartGraph(part_id=graph.part_id, nodes=nodes, edges=edges)
