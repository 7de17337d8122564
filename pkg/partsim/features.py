"""
Raw feature extraction: UV grids on faces, t grids on curves, geometric
scalars and encoded product attributes.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from partsim.errors import ConfigError, DomainError, FeatureExtractionError, SchemaError
from partsim.geometry import curve_length, curve_points, face_area, normalize_part, surface_points, trim_mask
from partsim.models import BRepPart, Curve, Face, PartGraph
from partsim.partio import read_json, write_json
from partsim.topology import build_graph

logger = logging.getLogger(__name__)

DEFAULT_FACE_GRID = (10, 10)
DEFAULT_CURVE_GRID = 10
FACE_CHANNELS = 7
CURVE_CHANNELS = 6
UNK = 0


def decode_product(vector, layout):
    """(name, token index | standardised value) pairs of a dense product vector."""
    pairs, offset = [], 0
    for name, kind, width in layout:
        block = vector[offset:offset + width]
        if kind == 'categorical' and block.any():
            pairs.append((name, int(np.argmax(block))))
        elif kind == 'real' and block[1] > 0:
            pairs.append((name, float(block[0])))
        offset += width
    return pairs


class AttrSchema:
    """Dataset-level product attribute schema.

    Categorical attributes own a vocabulary; index 0 is reserved for unknown
    tokens. Real attributes are standardised with the stored mean and std.
    """

    def __init__(self, categorical=None, real=None):
        self.categorical = {name: list(tokens) for name, tokens in sorted((categorical or {}).items())}
        self.real = {name: dict(stats) for name, stats in sorted((real or {}).items())}
        overlap = set(self.categorical) & set(self.real)
        if overlap:
            raise SchemaError(f'attributes declared both categorical and real: {sorted(overlap)}')

    def __eq__(self, other):
        return isinstance(other, AttrSchema) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f'<AttrSchema categorical={list(self.categorical)} real={list(self.real)}>'

    @property
    def layout(self):
        """Dense product vector blocks as (name, kind, width)."""
        blocks = [(name, 'categorical', len(tokens) + 1) for name, tokens in self.categorical.items()]
        blocks += [(name, 'real', 2) for name in self.real]
        return tuple(blocks)

    @property
    def width(self):
        return sum(width for _, _, width in self.layout)

    def encode(self, attrs):
        """Map raw face attributes to (name, token index | standardised value) pairs."""
        pairs = []
        for name, tokens in self.categorical.items():
            if name not in attrs:
                continue
            value = attrs[name]
            if not isinstance(value, str):
                raise SchemaError(f'attribute {name!r} is categorical, got {value!r}')
            pairs.append((name, tokens.index(value) + 1 if value in tokens else UNK))
        for name, stats in self.real.items():
            if name not in attrs:
                continue
            value = attrs[name]
            if isinstance(value, (str, bool)) or not isinstance(value, (int, float)):
                raise SchemaError(f'attribute {name!r} is real-valued, got {value!r}')
            std = stats.get('std') or 1.0
            pairs.append((name, (float(value) - stats['mean']) / std))
        return pairs

    def dense(self, pairs):
        values = dict(pairs)
        vector = np.zeros(self.width, dtype=np.float64)
        offset = 0
        for name, kind, width in self.layout:
            if name in values:
                if kind == 'categorical':
                    vector[offset + int(values[name])] = 1.0
                else:
                    vector[offset] = values[name]
                    vector[offset + 1] = 1.0
            offset += width
        return vector

    def decode(self, vector):
        """Inverse of `dense`: recover the (name, value) pairs."""
        return decode_product(vector, self.layout)

    @classmethod
    def fit(cls, parts):
        """Vocabularies and statistics of every face attribute in `parts`."""
        tokens, reals = {}, {}
        for part in parts:
            for face in part.faces:
                for name, value in face.attrs.items():
                    if isinstance(value, str):
                        if name in reals:
                            raise SchemaError(f'attribute {name!r} mixes tokens and real values')
                        tokens.setdefault(name, set()).add(value)
                    else:
                        if name in tokens:
                            raise SchemaError(f'attribute {name!r} mixes tokens and real values')
                        reals.setdefault(name, []).append(float(value))
        real = {}
        for name, values in reals.items():
            arr = np.asarray(values, dtype=np.float64)
            std = float(arr.std())
            real[name] = {'mean': float(arr.mean()), 'std': std if std > 0 else 1.0}
        return cls(categorical={k: sorted(v) for k, v in tokens.items()}, real=real)

    def to_dict(self):
        return {'categorical': self.categorical, 'real': self.real}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(categorical=data.get('categorical', {}), real=data.get('real', {}))
        except AttributeError:
            raise SchemaError(f'attribute schema must be a JSON object, got {type(data).__name__}')

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))


@dataclass(frozen=True)
class FaceRawFeatures:
    face_id: str
    uv_grid: np.ndarray
    surface_type: int
    area: float
    product: tuple = ()


@dataclass(frozen=True)
class CurveRawFeatures:
    curve_id: str
    t_grid: np.ndarray
    curve_type: int
    length: float


@dataclass(frozen=True, eq=False)
class GraphFeatures:
    """Stacked raw features; row i of every face array belongs to graph.nodes[i],
    row j of every curve array to graph.edges[j]."""
    graph: PartGraph
    face_grids: np.ndarray
    face_types: np.ndarray
    face_geo: np.ndarray
    face_product: np.ndarray
    curve_grids: np.ndarray
    curve_types: np.ndarray
    curve_geo: np.ndarray
    product_layout: tuple = field(default=())

    def __post_init__(self):
        n, m = len(self.graph.nodes), len(self.graph.edges)
        for name in ('face_grids', 'face_types', 'face_geo', 'face_product'):
            if len(getattr(self, name)) != n:
                raise FeatureExtractionError(self.graph.part_id, f'{name} has {len(getattr(self, name))} rows for {n} nodes')
        for name in ('curve_grids', 'curve_types', 'curve_geo'):
            if len(getattr(self, name)) != m:
                raise FeatureExtractionError(self.graph.part_id, f'{name} has {len(getattr(self, name))} rows for {m} edges')

    @property
    def part_id(self):
        return self.graph.part_id

    @property
    def face_grid_shape(self):
        return tuple(self.face_grids.shape[1:3])

    @property
    def curve_grid_size(self):
        return int(self.curve_grids.shape[1])

    def equals(self, other):
        """Exact equality of graph and every payload array."""
        return (
            self.graph == other.graph
            and self.product_layout == other.product_layout
            and all(
                np.array_equal(getattr(self, name), getattr(other, name))
                for name in ('face_grids', 'face_types', 'face_geo', 'face_product',
                             'curve_grids', 'curve_types', 'curve_geo')
            )
        )

    def face_features(self, index):
        return FaceRawFeatures(
            face_id=self.graph.nodes[index],
            uv_grid=self.face_grids[index],
            surface_type=int(self.face_types[index]),
            area=float(self.face_geo[index, 0]),
            product=tuple(decode_product(self.face_product[index], self.product_layout)),
        )

    def curve_features(self, index):
        return CurveRawFeatures(
            curve_id=self.graph.edges[index].curve_id,
            t_grid=self.curve_grids[index],
            curve_type=int(self.curve_types[index]),
            length=float(self.curve_geo[index, 0]),
        )

    def with_arrays(self, **arrays):
        return replace(self, **arrays)


def _check_grid(name, *sizes):
    if any(int(s) < 2 for s in sizes):
        raise ConfigError(f'{name} grid sizes must be >= 2, got {sizes}')


def sample_face_grid(face: Face, Gu: int, Gv: int, part: BRepPart = None):
    """Sample a face on a Gu x Gv grid spanning its uv-domain, boundaries included.

    Channels are (x, y, z, nx, ny, nz, mask). Without `part` the trimming loops
    cannot be resolved and the full uv-domain counts as inside.
    """
    _check_grid('face', Gu, Gv)
    u0, u1, v0, v1 = face.uv_domain
    u, v = np.meshgrid(np.linspace(u0, u1, Gu), np.linspace(v0, v1, Gv), indexing='ij')
    try:
        points, normals = surface_points(face.surface, u, v)
        mask = trim_mask(face, part, u, v) if part is not None and face.loops else np.ones(u.shape, dtype=bool)
    except (DomainError, FloatingPointError, KeyError) as e:
        raise FeatureExtractionError(face.id, str(e))
    grid = np.zeros((Gu, Gv, FACE_CHANNELS), dtype=np.float64)
    grid[..., 0:3] = np.where(mask[..., None], points, 0.0)
    grid[..., 3:6] = np.where(mask[..., None], normals, 0.0)
    grid[..., 6] = mask
    if not np.all(np.isfinite(grid)):
        raise FeatureExtractionError(face.id, 'non-finite samples')
    return grid


def sample_curve_grid(curve: Curve, Gt: int):
    """Sample a curve at Gt uniform parameters over its interval: (x, y, z, tx, ty, tz)."""
    _check_grid('curve', Gt)
    t0, t1 = curve.geometry.interval
    try:
        points, tangents = curve_points(curve.geometry, np.linspace(t0, t1, Gt))
    except (DomainError, FloatingPointError) as e:
        raise FeatureExtractionError(curve.id, str(e))
    return np.concatenate([points, tangents], axis=1)


def extract_graph_features(part: BRepPart, graph: PartGraph, schema: AttrSchema,
                           face_grid=DEFAULT_FACE_GRID, curve_grid=DEFAULT_CURVE_GRID) -> GraphFeatures:
    Gu, Gv = face_grid
    faces = [part.face(node) for node in graph.nodes]
    curves = [part.curve(edge.curve_id) for edge in graph.edges]
    try:
        areas = [face_area(face, part) for face in faces]
        lengths = [curve_length(curve.geometry) for curve in curves]
    except DomainError as e:
        raise FeatureExtractionError(part.id, str(e))
    product = np.zeros((len(faces), schema.width), dtype=np.float64)
    for i, face in enumerate(faces):
        product[i] = schema.dense(schema.encode(face.attrs))
    return GraphFeatures(
        graph=graph,
        face_grids=np.stack([sample_face_grid(face, Gu, Gv, part) for face in faces]),
        face_types=np.array([face.surface.kind_index for face in faces], dtype=np.int64),
        face_geo=np.array(areas, dtype=np.float64).reshape(-1, 1),
        face_product=product,
        curve_grids=(np.stack([sample_curve_grid(c, curve_grid) for c in curves])
                     if curves else np.zeros((0, curve_grid, CURVE_CHANNELS))),
        curve_types=np.array([c.geometry.kind_index for c in curves], dtype=np.int64),
        curve_geo=np.array(lengths, dtype=np.float64).reshape(-1, 1),
        product_layout=schema.layout,
    )


def featurize(part: BRepPart, schema: AttrSchema, face_grid=DEFAULT_FACE_GRID, curve_grid=DEFAULT_CURVE_GRID):
    """normalize -> graph -> features for one part; returns (GraphFeatures, ConversionReport)."""
    normalized = normalize_part(part)
    graph, report = build_graph(normalized)
    features = extract_graph_features(normalized, graph, schema, face_grid, curve_grid)
    if not math.isfinite(float(features.face_geo.sum())):
        raise FeatureExtractionError(part.id, 'non-finite face areas')
    return features, report
