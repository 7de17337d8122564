"""
Graph augmentation: feature masking and structural deletion.

Views only ever lose information; nothing is added to the graph or its
feature payloads.
"""

import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from partsim.errors import ConfigError
from partsim.features import GraphFeatures
from partsim.partio import write_jsonl
from partsim.topology import subgraph

logger = logging.getLogger(__name__)

SCHEMES = ('Node', 'Node1Hop', 'EdgeVertices')
GRANULARITIES = ('group', 'scalar')
RATIO_RANGE = (0.0, 0.2)


@dataclass(frozen=True)
class AugmentConfig:
    alpha: float = 0.1
    beta: float = 0.1
    scheme: str = 'Node'
    granularity: str = 'group'
    seed: int = 0

    def validate(self):
        lo, hi = RATIO_RANGE
        for name in ('alpha', 'beta'):
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ConfigError(f'{name} must lie in [{lo}, {hi}], got {value}')
        if self.scheme not in SCHEMES:
            raise ConfigError(f'scheme must be one of {SCHEMES}, got {self.scheme!r}')
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f'granularity must be one of {GRANULARITIES}, got {self.granularity!r}')
        return self


def view_rng(seed, part_id, epoch, view):
    """Independent stream per (seed, part, epoch, view), whatever the schedule."""
    key = int.from_bytes(hashlib.sha256(part_id.encode('utf-8')).digest()[:8], 'little')
    return np.random.default_rng([int(seed), key, int(epoch), int(view)])


def removal_target(num_nodes, beta):
    """m = round(beta * |V|), halves rounded up, capped at |V| - 1."""
    return min(int(math.floor(beta * num_nodes + 0.5)), max(num_nodes - 1, 0))


def draw_feature_mask(num_nodes, num_edges, alpha, rng):
    """Boolean masks: nodes x (uv, geo, product) and edges x (uv, geo)."""
    return rng.random((num_nodes, 3)) < alpha, rng.random((num_edges, 2)) < alpha


def _zero_rows(array, rows):
    out = np.array(array, copy=True)
    out[rows] = 0
    return out


def mask_features(gf: GraphFeatures, alpha, rng, granularity='group') -> GraphFeatures:
    """Zero-fill each feature group of each node and edge with probability alpha."""
    if alpha <= 0:
        return gf
    if granularity == 'scalar':
        arrays = {}
        for name in ('face_grids', 'face_geo', 'face_product', 'curve_grids', 'curve_geo'):
            value = getattr(gf, name)
            arrays[name] = np.where(rng.random(value.shape) < alpha, 0, value).astype(value.dtype)
        return gf.with_arrays(**arrays)
    node_mask, edge_mask = draw_feature_mask(len(gf.graph.nodes), len(gf.graph.edges), alpha, rng)
    return gf.with_arrays(
        face_grids=_zero_rows(gf.face_grids, node_mask[:, 0]),
        face_geo=_zero_rows(gf.face_geo, node_mask[:, 1]),
        face_product=_zero_rows(gf.face_product, node_mask[:, 2]),
        curve_grids=_zero_rows(gf.curve_grids, edge_mask[:, 0]),
        curve_geo=_zero_rows(gf.curve_geo, edge_mask[:, 1]),
    )


def _cap_add(removed, candidates, limit):
    for node in candidates:
        if len(removed) >= limit:
            break
        removed.add(node)


def draw_removal(graph, beta, scheme, rng):
    """Nodes to delete and a record of the draw."""
    nodes = list(graph.nodes)
    n = len(nodes)
    m = removal_target(n, beta)
    removed = set()
    if m > 0:
        if scheme == 'Node':
            removed = {nodes[i] for i in rng.choice(n, size=m, replace=False)}
        elif scheme == 'Node1Hop':
            adjacency = graph.neighbors()
            while len(removed) < m:
                remaining = [v for v in nodes if v not in removed]
                seed = remaining[int(rng.integers(len(remaining)))]
                hop = [v for v in nodes if v in adjacency[seed] and v not in removed]
                _cap_add(removed, [seed] + hop, n - 1)
        elif scheme == 'EdgeVertices':
            while len(removed) < m:
                alive = [e for e in graph.edges if e.u not in removed and e.v not in removed]
                if alive:
                    edge = alive[int(rng.integers(len(alive)))]
                    _cap_add(removed, [edge.u, edge.v], n - 1)
                else:
                    remaining = [v for v in nodes if v not in removed]
                    removed.add(remaining[int(rng.integers(len(remaining)))])
        else:
            raise ConfigError(f'unknown augmentation scheme {scheme!r}')
    record = {'part_id': graph.part_id, 'scheme': scheme, 'beta': beta, 'nodes': n,
              'target': m, 'removed': len(removed), 'overshoot': len(removed) - m}
    if record['overshoot'] > 0:
        logger.warning(f'{graph.part_id}: {scheme} removed {len(removed)} nodes for target {m}')
    return removed, record


def select_nodes(gf: GraphFeatures, keep) -> GraphFeatures:
    """Induced sub-view: kept nodes and the edges between them, payloads sliced to match."""
    graph = subgraph(gf.graph, keep)
    keep = set(graph.nodes)
    node_rows = np.array([i for i, v in enumerate(gf.graph.nodes) if v in keep], dtype=np.int64)
    edge_rows = np.array([j for j, e in enumerate(gf.graph.edges) if e.u in keep and e.v in keep], dtype=np.int64)
    return GraphFeatures(
        graph=graph,
        face_grids=gf.face_grids[node_rows],
        face_types=gf.face_types[node_rows],
        face_geo=gf.face_geo[node_rows],
        face_product=gf.face_product[node_rows],
        curve_grids=gf.curve_grids[edge_rows],
        curve_types=gf.curve_types[edge_rows],
        curve_geo=gf.curve_geo[edge_rows],
        product_layout=gf.product_layout,
    )


def drop_structure(gf: GraphFeatures, beta, scheme, rng, records=None) -> GraphFeatures:
    """Delete nodes under `scheme` together with every incident edge."""
    removed, record = draw_removal(gf.graph, beta, scheme, rng)
    if records is not None:
        records.append(record)
    if not removed:
        return gf
    return select_nodes(gf, [v for v in gf.graph.nodes if v not in removed])


def augment_pair(gf: GraphFeatures, cfg: AugmentConfig, epoch=0, records=None):
    """Two independent views (structure deletion, then feature masking)."""
    views = []
    for view in (0, 1):
        rng = view_rng(cfg.seed, gf.part_id, epoch, view)
        dropped = drop_structure(gf, cfg.beta, cfg.scheme, rng, records)
        if records is not None:
            records[-1].update(epoch=epoch, view=view)
        views.append(mask_features(dropped, cfg.alpha, rng, cfg.granularity))
    return views[0], views[1]


def write_audit(path, records):
    write_jsonl(path, records)
