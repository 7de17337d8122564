"""
Binary graph cache.

Layout (little-endian):
    b'PSGC' | version u8 | meta length u32 | meta JSON
    then per record: header length u32 | header JSON | float32 arrays
    (face grids, face geo, face product, curve grids, curve geo), row-major.
"""

import numpy as np

from partsim.errors import FormatError
from partsim.features import CURVE_CHANNELS, FACE_CHANNELS, GraphFeatures
from partsim.models import Edge, PartGraph
from partsim.partio import atomic_write, dumps, open_versioned, pack_u32, versioned_prefix

MAGIC = b'PSGC'
VERSION = 1


def _record_bytes(gf: GraphFeatures):
    header = {
        'part_id': gf.part_id,
        'nodes': list(gf.graph.nodes),
        'edges': [[e.u, e.v, e.curve_id] for e in gf.graph.edges],
        'face_types': [int(t) for t in gf.face_types],
        'curve_types': [int(t) for t in gf.curve_types],
    }
    blob = dumps(header).encode('utf-8')
    arrays = [gf.face_grids, gf.face_geo, gf.face_product, gf.curve_grids, gf.curve_geo]
    payload = b''.join(np.ascontiguousarray(a, dtype='<f4').tobytes() for a in arrays)
    return pack_u32(len(blob)) + blob + payload


def write_graph_cache(path, records, meta):
    """Write records plus a metadata block.

    `meta` must carry face_grid, curve_grid and product_layout; the record
    count and format version are added here.
    """
    meta = dict(meta, count=len(records), version=VERSION)
    chunks = [versioned_prefix(MAGIC, VERSION, meta)]
    chunks.extend(_record_bytes(gf) for gf in records)
    atomic_write(path, b''.join(chunks))


def read_graph_cache(path):
    """Returns (meta, list of GraphFeatures) with float32 payloads."""
    reader, meta = open_versioned(path, MAGIC, VERSION)
    try:
        gu, gv = meta['face_grid']
        gt = meta['curve_grid']
        layout = tuple(tuple(block) for block in meta['product_layout'])
        count = meta['count']
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(path, f'incomplete metadata: {e}')
    width = sum(block[2] for block in layout)
    records = []
    for _ in range(count):
        header = reader.json()
        n, m = len(header['nodes']), len(header['edges'])
        graph = PartGraph(
            part_id=header['part_id'],
            nodes=tuple(header['nodes']),
            edges=tuple(Edge(u=u, v=v, curve_id=c) for u, v, c in header['edges']),
        )
        records.append(GraphFeatures(
            graph=graph,
            face_grids=reader.floats((n, gu, gv, FACE_CHANNELS)),
            face_types=np.array(header['face_types'], dtype=np.int64),
            face_geo=reader.floats((n, 1)),
            face_product=reader.floats((n, width)),
            curve_grids=reader.floats((m, gt, CURVE_CHANNELS)),
            curve_types=np.array(header['curve_types'], dtype=np.int64),
            curve_geo=reader.floats((m, 1)),
            product_layout=layout,
        ))
    reader.finish()
    return meta, records
