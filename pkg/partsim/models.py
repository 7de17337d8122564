"""
Boundary-representation data model.

Parts are immutable after construction. Every constructor validates its
invariants and raises GeometryError when they do not hold.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

from partsim.errors import GeometryError

SURFACE_KINDS = ('plane', 'cylinder', 'cone', 'sphere', 'torus', 'freeform')
CURVE_KINDS = ('line', 'circle', 'freeform')

UNIT_TOLERANCE = 1e-9

# Parameters stored for each kind; everything else keeps its default.
SURFACE_PARAMS = {
    'plane': ('origin', 'axis', 'ref_dir'),
    'cylinder': ('origin', 'axis', 'ref_dir', 'radius', 'height'),
    'cone': ('origin', 'axis', 'ref_dir', 'radius', 'height', 'semi_angle'),
    'sphere': ('origin', 'axis', 'ref_dir', 'radius'),
    'torus': ('origin', 'axis', 'ref_dir', 'radius', 'minor_radius'),
    'freeform': ('control_grid',),
}
CURVE_PARAMS = {
    'line': ('start', 'end'),
    'circle': ('center', 'axis', 'ref_dir', 'radius'),
    'freeform': ('control_points',),
}


def _vec(value, name):
    try:
        vec = tuple(float(c) for c in value)
    except (TypeError, ValueError):
        raise GeometryError(f'{name} must be a 3-vector, got {value!r}')
    if len(vec) != 3 or not all(math.isfinite(c) for c in vec):
        raise GeometryError(f'{name} must be a finite 3-vector, got {value!r}')
    return vec


def _check_unit(vec, name):
    norm = math.sqrt(sum(c * c for c in vec))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise GeometryError(f'{name} must have unit norm, got |{name}|={norm!r}')


def _check_frame(axis, ref_dir):
    _check_unit(axis, 'axis')
    _check_unit(ref_dir, 'ref_dir')
    dot = sum(a * b for a, b in zip(axis, ref_dir))
    if abs(dot) > UNIT_TOLERANCE:
        raise GeometryError(f'ref_dir must be orthogonal to axis, got dot={dot!r}')


@dataclass(frozen=True)
class SurfaceGeometry:
    """Parametric surface.

    Analytic kinds are expressed in a local frame (origin, axis, ref_dir); the
    third frame vector is axis x ref_dir. Cylinders and cones use v in [0, 1]
    as the fraction of `height` along the axis. Freeform surfaces are
    tensor-product Bezier patches over [0, 1]^2 (2x2 bilinear, 4x4 bicubic).
    """
    kind: str
    origin: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    ref_dir: tuple = (1.0, 0.0, 0.0)
    radius: float = 0.0
    minor_radius: float = 0.0
    height: float = 0.0
    semi_angle: float = 0.0
    control_grid: tuple = ()
    reversed: bool = False

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise GeometryError(f'unknown surface kind {self.kind!r}')
        object.__setattr__(self, 'origin', _vec(self.origin, 'origin'))
        object.__setattr__(self, 'axis', _vec(self.axis, 'axis'))
        object.__setattr__(self, 'ref_dir', _vec(self.ref_dir, 'ref_dir'))
        if self.kind == 'freeform':
            grid = tuple(tuple(_vec(p, 'control point') for p in row) for row in self.control_grid)
            if not grid or any(len(row) != len(grid[0]) for row in grid):
                raise GeometryError('freeform control grid must be rectangular and non-empty')
            if len(grid) < 2 or len(grid[0]) < 2:
                raise GeometryError('freeform control grid needs at least 2x2 points')
            object.__setattr__(self, 'control_grid', grid)
            return
        _check_frame(self.axis, self.ref_dir)
        if self.kind in ('cylinder', 'cone', 'sphere', 'torus') and not self.radius > 0:
            raise GeometryError(f'{self.kind} radius must be > 0, got {self.radius!r}')
        if self.kind in ('cylinder', 'cone') and not self.height > 0:
            raise GeometryError(f'{self.kind} height must be > 0, got {self.height!r}')
        if self.kind == 'torus' and not self.minor_radius > 0:
            raise GeometryError(f'torus minor radius must be > 0, got {self.minor_radius!r}')
        if self.kind == 'cone' and not abs(self.semi_angle) < math.pi / 2:
            raise GeometryError(f'cone semi-angle must lie in (-pi/2, pi/2), got {self.semi_angle!r}')

    @property
    def kind_index(self):
        return SURFACE_KINDS.index(self.kind)

    def params(self):
        return {name: _plain(getattr(self, name)) for name in SURFACE_PARAMS[self.kind]}

    def to_dict(self):
        data = {'kind': self.kind, 'params': self.params()}
        if self.reversed:
            data['reversed'] = True
        return data

    @classmethod
    def from_dict(cls, data):
        params = dict(data.get('params', {}))
        unknown = set(params) - set(SURFACE_PARAMS.get(data.get('kind'), ()))
        if unknown:
            raise GeometryError(f'unexpected surface params {sorted(unknown)}')
        return cls(kind=data.get('kind'), reversed=bool(data.get('reversed', False)), **params)


@dataclass(frozen=True)
class CurveGeometry:
    """Parametric curve over the interval [t0, t1].

    Lines run from `start` (t=0) to `end` (t=1). Circles are parametrised by
    angle in the (ref_dir, axis x ref_dir) plane. Freeform curves are Bezier
    curves over [0, 1].
    """
    kind: str
    interval: tuple = (0.0, 1.0)
    start: tuple = (0.0, 0.0, 0.0)
    end: tuple = (1.0, 0.0, 0.0)
    center: tuple = (0.0, 0.0, 0.0)
    axis: tuple = (0.0, 0.0, 1.0)
    ref_dir: tuple = (1.0, 0.0, 0.0)
    radius: float = 0.0
    control_points: tuple = ()

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise GeometryError(f'unknown curve kind {self.kind!r}')
        t0, t1 = (float(t) for t in self.interval)
        if not t0 < t1:
            raise GeometryError(f'curve interval must satisfy t0 < t1, got {self.interval!r}')
        object.__setattr__(self, 'interval', (t0, t1))
        for name in ('start', 'end', 'center', 'axis', 'ref_dir'):
            object.__setattr__(self, name, _vec(getattr(self, name), name))
        if self.kind == 'line':
            if self.start == self.end:
                raise GeometryError('line start and end coincide')
            if t0 < 0.0 or t1 > 1.0:
                raise GeometryError(f'line interval must lie within [0, 1], got {self.interval!r}')
        elif self.kind == 'circle':
            _check_frame(self.axis, self.ref_dir)
            if not self.radius > 0:
                raise GeometryError(f'circle radius must be > 0, got {self.radius!r}')
        else:
            points = tuple(_vec(p, 'control point') for p in self.control_points)
            if len(points) < 2:
                raise GeometryError('freeform curve needs at least 2 control points')
            if t0 < 0.0 or t1 > 1.0:
                raise GeometryError(f'freeform interval must lie within [0, 1], got {self.interval!r}')
            object.__setattr__(self, 'control_points', points)

    @property
    def kind_index(self):
        return CURVE_KINDS.index(self.kind)

    def params(self):
        return {name: _plain(getattr(self, name)) for name in CURVE_PARAMS[self.kind]}

    def to_dict(self):
        return {'kind': self.kind, 'params': self.params(), 'interval': list(self.interval)}

    @classmethod
    def from_dict(cls, data):
        params = dict(data.get('params', {}))
        unknown = set(params) - set(CURVE_PARAMS.get(data.get('kind'), ()))
        if unknown:
            raise GeometryError(f'unexpected curve params {sorted(unknown)}')
        interval = data.get('interval')
        if interval is None:
            interval = (0.0, 2 * math.pi) if data.get('kind') == 'circle' else (0.0, 1.0)
        return cls(kind=data.get('kind'), interval=tuple(interval), **params)


@dataclass(frozen=True)
class Face:
    """A bounded region of a surface.

    The first loop is the outer boundary, any further loops are holes.
    """
    id: str
    surface: SurfaceGeometry
    uv_domain: tuple
    loops: tuple = ()
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        u0, u1, v0, v1 = (float(x) for x in self.uv_domain)
        if not (u1 > u0 and v1 > v0):
            raise GeometryError(f'face {self.id}: uv-domain must have positive area, got {self.uv_domain!r}')
        object.__setattr__(self, 'uv_domain', (u0, u1, v0, v1))
        object.__setattr__(self, 'loops', tuple(tuple(loop) for loop in self.loops))
        for name, value in self.attrs.items():
            if not isinstance(value, (str, int, float)) or isinstance(value, bool):
                raise GeometryError(f'face {self.id}: attribute {name!r} must be a token or a real value')

    def to_dict(self):
        return {
            'id': self.id,
            'surface': self.surface.to_dict(),
            'uv_domain': list(self.uv_domain),
            'loops': [list(loop) for loop in self.loops],
            'attrs': dict(self.attrs),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data['id']),
            surface=SurfaceGeometry.from_dict(data['surface']),
            uv_domain=tuple(data['uv_domain']),
            loops=tuple(tuple(str(c) for c in loop) for loop in data.get('loops', [])),
            attrs=dict(data.get('attrs', {})),
        )


@dataclass(frozen=True)
class Curve:
    """An edge curve shared by its adjacent faces."""
    id: str
    geometry: CurveGeometry
    adjacent_faces: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'adjacent_faces', tuple(self.adjacent_faces))
        if len(set(self.adjacent_faces)) != len(self.adjacent_faces):
            raise GeometryError(f'curve {self.id}: adjacent faces must be distinct')

    def to_dict(self):
        return {'id': self.id, 'geometry': self.geometry.to_dict(), 'adjacent_faces': list(self.adjacent_faces)}

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data['id']),
            geometry=CurveGeometry.from_dict(data['geometry']),
            adjacent_faces=tuple(str(f) for f in data.get('adjacent_faces', [])),
        )


@dataclass(frozen=True)
class BRepPart:
    """A solid part: its faces and the curves between them."""
    id: str
    faces: tuple
    curves: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'faces', tuple(self.faces))
        object.__setattr__(self, 'curves', tuple(self.curves))
        if not self.faces:
            raise GeometryError(f'part {self.id}: needs at least one face')
        face_ids = [f.id for f in self.faces]
        curve_ids = [c.id for c in self.curves]
        if len(set(face_ids)) != len(face_ids):
            raise GeometryError(f'part {self.id}: duplicate face ids')
        if len(set(curve_ids)) != len(curve_ids):
            raise GeometryError(f'part {self.id}: duplicate curve ids')
        known_faces, known_curves = set(face_ids), set(curve_ids)
        for face in self.faces:
            for loop in face.loops:
                missing = [c for c in loop if c not in known_curves]
                if missing:
                    raise GeometryError(f'part {self.id}: face {face.id} loop references unknown curves {missing}')
        for curve in self.curves:
            missing = [f for f in curve.adjacent_faces if f not in known_faces]
            if missing:
                raise GeometryError(f'part {self.id}: curve {curve.id} references unknown faces {missing}')

    def __repr__(self):
        return f'<BRepPart {self.id}: {len(self.faces)} faces, {len(self.curves)} curves>'

    @cached_property
    def faces_by_id(self):
        return {f.id: f for f in self.faces}

    @cached_property
    def curves_by_id(self):
        return {c.id: c for c in self.curves}

    def face(self, face_id):
        return self.faces_by_id[face_id]

    def curve(self, curve_id):
        return self.curves_by_id[curve_id]

    def to_dict(self):
        return {
            'id': self.id,
            'faces': [f.to_dict() for f in self.faces],
            'curves': [c.to_dict() for c in self.curves],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            id=str(data['id']),
            faces=tuple(Face.from_dict(f) for f in data['faces']),
            curves=tuple(Curve.from_dict(c) for c in data.get('curves', [])),
        )


@dataclass(frozen=True)
class Edge:
    """Undirected graph edge between two face ids, u < v."""
    u: str
    v: str
    curve_id: str


@dataclass(frozen=True)
class PartGraph:
    """Face-adjacency graph g = {V, E} of a part."""
    part_id: str
    nodes: tuple
    edges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple(self.nodes))
        object.__setattr__(self, 'edges', tuple(self.edges))
        nodes = set(self.nodes)
        if len(nodes) != len(self.nodes):
            raise GeometryError(f'graph {self.part_id}: duplicate nodes')
        seen = set()
        for edge in self.edges:
            if edge.u == edge.v:
                raise GeometryError(f'graph {self.part_id}: self-loop on {edge.u}')
            if edge.u not in nodes or edge.v not in nodes:
                raise GeometryError(f'graph {self.part_id}: dangling edge {edge.u}-{edge.v}')
            key = frozenset((edge.u, edge.v))
            if key in seen:
                raise GeometryError(f'graph {self.part_id}: duplicate edge {edge.u}-{edge.v}')
            seen.add(key)

    def __repr__(self):
        return f'<PartGraph {self.part_id}: |V|={len(self.nodes)} |E|={len(self.edges)}>'

    def degree(self, node):
        return sum(1 for e in self.edges if node in (e.u, e.v))

    def neighbors(self):
        adjacency = {n: set() for n in self.nodes}
        for e in self.edges:
            adjacency[e.u].add(e.v)
            adjacency[e.v].add(e.u)
        return adjacency


def _plain(value):
    """Render dataclass parameters as JSON-friendly lists."""
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value
