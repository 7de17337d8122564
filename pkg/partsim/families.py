"""
Synthetic part families.

A family is a template (box, capped cylinder, L-bracket, ring, slotted plate,
box with holes) plus uniform jitter ranges for its dimensions and product
attributes. Every template is an extruded 2D profile: an outer boundary
(polygon or circle) with optional holes, swept along +z.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from partsim.errors import GeometryError, SpecError
from partsim.models import BRepPart, Curve, CurveGeometry, Face, SurfaceGeometry

logger = logging.getLogger(__name__)

Z_AXIS = (0.0, 0.0, 1.0)
X_AXIS = (1.0, 0.0, 0.0)

TEMPLATE_PARAMS = {
    'box': ('length', 'width', 'height'),
    'capped_cylinder': ('radius', 'height'),
    'l_bracket': ('length', 'width', 'height', 'thickness'),
    'ring': ('outer_radius', 'inner_radius', 'height'),
    'slotted_plate': ('length', 'width', 'height', 'slot_length', 'slot_width'),
    'box_with_holes': ('length', 'width', 'height', 'hole_radius'),
}

# Attribute vocabularies shared by every family; a part's tokens say nothing about its family
MATERIALS = ('steel', 'aluminum', 'brass')
PROCESSES = ('milling', 'turning', 'casting')
COLORS = ('grey', 'silver', 'black')
ROUGHNESS = (0.4, 3.2)


@dataclass(frozen=True)
class Circle2D:
    center: tuple
    radius: float


@dataclass(frozen=True)
class FamilySpec:
    """Template name plus jitter ranges.

    `params` maps each template dimension to a (low, high) range sampled
    uniformly; categorical attributes are drawn once per part, `roughness`
    once per face.
    """
    name: str
    template: str
    params: dict
    materials: tuple = MATERIALS
    processes: tuple = PROCESSES
    colors: tuple = COLORS
    roughness: tuple = ROUGHNESS

    def validate(self):
        if self.template not in TEMPLATE_PARAMS:
            raise SpecError(f'family {self.name}: unknown template {self.template!r}')
        expected = set(TEMPLATE_PARAMS[self.template])
        if set(self.params) != expected:
            raise SpecError(f'family {self.name}: template {self.template} needs params {sorted(expected)}, got {sorted(self.params)}')
        for key, bounds in list(self.params.items()) + [('roughness', self.roughness)]:
            lo, hi = bounds
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise SpecError(f'family {self.name}: invalid jitter range for {key}: {bounds!r}')
        for key in ('materials', 'processes', 'colors'):
            if not getattr(self, key):
                raise SpecError(f'family {self.name}: {key} must not be empty')
        return self

    def to_dict(self):
        return {
            'name': self.name,
            'template': self.template,
            'params': {k: list(v) for k, v in self.params.items()},
            'materials': list(self.materials),
            'processes': list(self.processes),
            'colors': list(self.colors),
            'roughness': list(self.roughness),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                name=str(data['name']),
                template=str(data['template']),
                params={k: (float(v[0]), float(v[1])) for k, v in data['params'].items()},
                materials=tuple(data.get('materials', MATERIALS)),
                processes=tuple(data.get('processes', PROCESSES)),
                colors=tuple(data.get('colors', COLORS)),
                roughness=tuple(float(x) for x in data.get('roughness', ROUGHNESS)),
            )
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise SpecError(f'malformed family spec: {e}')


def default_families():
    """Ten families over the six templates.

    Families on the same template differ only in their proportion ranges:
    block, slab and pillar are boxes, rod and disc capped cylinders, washer
    and collar rings. Block, bracket and both plates share one footprint.
    Attributes come from the shared vocabularies.
    """
    return [
        FamilySpec('block', 'box', {'length': (1.9, 2.1), 'width': (1.0, 1.15), 'height': (0.55, 0.7)}),
        FamilySpec('pillar', 'box', {'length': (0.55, 0.7), 'width': (0.55, 0.7), 'height': (1.9, 2.1)}),
        FamilySpec('rod', 'capped_cylinder', {'radius': (0.28, 0.36), 'height': (1.9, 2.1)}),
        FamilySpec('disc', 'capped_cylinder', {'radius': (0.95, 1.05), 'height': (0.5, 0.65)}),
        FamilySpec('slab', 'box', {'length': (1.9, 2.1), 'width': (1.35, 1.5), 'height': (0.3, 0.4)}),
        FamilySpec('bracket', 'l_bracket',
                   {'length': (1.9, 2.1), 'width': (1.0, 1.15), 'height': (0.55, 0.7), 'thickness': (0.2, 0.3)}),
        FamilySpec('washer', 'ring', {'outer_radius': (0.95, 1.05), 'inner_radius': (0.4, 0.5), 'height': (0.2, 0.3)}),
        FamilySpec('collar', 'ring', {'outer_radius': (0.95, 1.05), 'inner_radius': (0.65, 0.75), 'height': (0.5, 0.65)}),
        FamilySpec('slotted-plate', 'slotted_plate',
                   {'length': (1.9, 2.1), 'width': (1.0, 1.15), 'height': (0.15, 0.22),
                    'slot_length': (0.9, 1.2), 'slot_width': (0.25, 0.35)}),
        FamilySpec('flange-plate', 'box_with_holes',
                   {'length': (1.9, 2.1), 'width': (1.0, 1.15), 'height': (0.15, 0.22), 'hole_radius': (0.15, 0.2)}),
    ]


# -- extrusion ----------------------------------------------------------------

def _signed_area(vertices):
    x = np.array([p[0] for p in vertices])
    y = np.array([p[1] for p in vertices])
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass
class _Builder:
    height: float
    faces: list = field(default_factory=list)
    curves: list = field(default_factory=list)

    def face_id(self):
        return f'F{len(self.faces)}'

    def add_curve(self, geometry, adjacent):
        curve_id = f'C{len(self.curves)}'
        self.curves.append(Curve(id=curve_id, geometry=geometry, adjacent_faces=tuple(adjacent)))
        return curve_id


def _line(a, b):
    return CurveGeometry(kind='line', start=a, end=b)


def _circle(center, radius, z):
    return CurveGeometry(kind='circle', interval=(0.0, 2 * math.pi), center=(center[0], center[1], z),
                         axis=Z_AXIS, ref_dir=X_AXIS, radius=radius)


def _polygon_walls(builder, vertices, bottom_id, top_id):
    """Planar side walls of a polygonal boundary; returns (bottom loop, top loop)."""
    h = builder.height
    n = len(vertices)
    wall_ids = [f'F{len(builder.faces) + i}' for i in range(n)]
    bottom_loop, top_loop, verticals = [], [], []
    for i in range(n):
        x, y = vertices[i]
        verticals.append(builder.add_curve(_line((x, y, 0.0), (x, y, h)), (wall_ids[i - 1], wall_ids[i])))
    walls = []
    for i in range(n):
        (x0, y0), (x1, y1) = vertices[i], vertices[(i + 1) % n]
        bottom = builder.add_curve(_line((x0, y0, 0.0), (x1, y1, 0.0)), (bottom_id, wall_ids[i]))
        top = builder.add_curve(_line((x0, y0, h), (x1, y1, h)), (top_id, wall_ids[i]))
        bottom_loop.append(bottom)
        top_loop.append(top)
        length = math.hypot(x1 - x0, y1 - y0)
        dx, dy = (x1 - x0) / length, (y1 - y0) / length
        surface = SurfaceGeometry(kind='plane', origin=(x0, y0, 0.0), axis=(dy, -dx, 0.0), ref_dir=(dx, dy, 0.0))
        loop = (bottom, verticals[(i + 1) % n], top, verticals[i])
        walls.append(Face(id=wall_ids[i], surface=surface, uv_domain=(0.0, length, 0.0, h), loops=(loop,)))
    builder.faces.extend(walls)
    return bottom_loop, top_loop


def _circular_wall(builder, circle, bottom_id, top_id, inward):
    h = builder.height
    wall_id = builder.face_id()
    cx, cy = circle.center
    bottom = builder.add_curve(_circle(circle.center, circle.radius, 0.0), (bottom_id, wall_id))
    top = builder.add_curve(_circle(circle.center, circle.radius, h), (top_id, wall_id))
    seam = builder.add_curve(_line((cx + circle.radius, cy, 0.0), (cx + circle.radius, cy, h)), (wall_id,))
    surface = SurfaceGeometry(kind='cylinder', origin=(cx, cy, 0.0), axis=Z_AXIS, ref_dir=X_AXIS,
                              radius=circle.radius, height=h, reversed=inward)
    builder.faces.append(Face(id=wall_id, surface=surface, uv_domain=(0.0, 2 * math.pi, 0.0, 1.0),
                              loops=((bottom, seam, top, seam),)))
    return [bottom], [top]


def extrude_profile(part_id, outer, holes, height):
    """Sweep a profile along +z into a closed solid.

    `outer` and each hole is either a list of (x, y) vertices or a Circle2D.
    Face F0 is the bottom cap, F1 the top cap, walls follow in boundary order.
    """
    if not height > 0:
        raise SpecError(f'{part_id}: extrusion height must be > 0, got {height!r}')
    builder = _Builder(height=height)
    bottom_id, top_id = 'F0', 'F1'
    builder.faces.extend([None, None])
    boundaries = [(outer, False)] + [(hole, True) for hole in holes]
    bottom_loops, top_loops = [], []
    for boundary, is_hole in boundaries:
        if isinstance(boundary, Circle2D):
            if not boundary.radius > 0:
                raise SpecError(f'{part_id}: circle radius must be > 0, got {boundary.radius!r}')
            loops = _circular_wall(builder, boundary, bottom_id, top_id, inward=is_hole)
        else:
            vertices = [tuple(map(float, p)) for p in boundary]
            area = _signed_area(vertices)
            if abs(area) < 1e-12:
                raise SpecError(f'{part_id}: degenerate profile polygon')
            # outer boundaries run counter-clockwise, holes clockwise
            if (area < 0) != is_hole:
                vertices = vertices[::-1]
            loops = _polygon_walls(builder, vertices, bottom_id, top_id)
        bottom_loops.append(tuple(loops[0]))
        top_loops.append(tuple(loops[1]))

    if isinstance(outer, Circle2D):
        (cx, cy), r = outer.center, outer.radius
        domain = (cx - r, cx + r, cy - r, cy + r)
    else:
        xs, ys = [p[0] for p in outer], [p[1] for p in outer]
        domain = (min(xs), max(xs), min(ys), max(ys))
    builder.faces[0] = Face(id=bottom_id, surface=SurfaceGeometry(kind='plane', origin=(0.0, 0.0, 0.0), reversed=True),
                            uv_domain=domain, loops=tuple(bottom_loops))
    builder.faces[1] = Face(id=top_id, surface=SurfaceGeometry(kind='plane', origin=(0.0, 0.0, height)),
                            uv_domain=domain, loops=tuple(top_loops))
    return BRepPart(id=part_id, faces=tuple(builder.faces), curves=tuple(builder.curves))


def _rectangle(length, width, cx=0.0, cy=0.0):
    hl, hw = 0.5 * length, 0.5 * width
    return [(cx - hl, cy - hw), (cx + hl, cy - hw), (cx + hl, cy + hw), (cx - hl, cy + hw)]


def build_template(part_id, template, p):
    """Build one part from concrete template dimensions."""
    for key, value in p.items():
        if not value > 0:
            raise SpecError(f'{part_id}: {key} must be > 0, got {value!r}')
    if template == 'box':
        return extrude_profile(part_id, _rectangle(p['length'], p['width']), [], p['height'])
    if template == 'capped_cylinder':
        return extrude_profile(part_id, Circle2D((0.0, 0.0), p['radius']), [], p['height'])
    if template == 'l_bracket':
        length, width, t = p['length'], p['width'], p['thickness']
        if not t < min(length, width):
            raise SpecError(f'{part_id}: bracket thickness {t} must be below both leg lengths')
        profile = [(0.0, 0.0), (length, 0.0), (length, t), (t, t), (t, width), (0.0, width)]
        return extrude_profile(part_id, profile, [], p['height'])
    if template == 'ring':
        if not p['inner_radius'] < p['outer_radius']:
            raise SpecError(f'{part_id}: inner radius must be below outer radius')
        return extrude_profile(part_id, Circle2D((0.0, 0.0), p['outer_radius']),
                               [Circle2D((0.0, 0.0), p['inner_radius'])], p['height'])
    if template == 'slotted_plate':
        if not (p['slot_length'] < 0.9 * p['length'] and p['slot_width'] < 0.9 * p['width']):
            raise SpecError(f'{part_id}: slot does not fit inside the plate')
        return extrude_profile(part_id, _rectangle(p['length'], p['width']),
                               [_rectangle(p['slot_length'], p['slot_width'])], p['height'])
    if template == 'box_with_holes':
        length, width, r = p['length'], p['width'], p['hole_radius']
        if not 2 * r < 0.9 * min(0.5 * length, width):
            raise SpecError(f'{part_id}: holes of radius {r} do not fit inside the plate')
        holes = [Circle2D((-0.25 * length, 0.0), r), Circle2D((0.25 * length, 0.0), r)]
        return extrude_profile(part_id, _rectangle(length, width), holes, p['height'])
    raise SpecError(f'unknown template {template!r}')


def _with_attrs(part, attrs, rng, roughness):
    faces = []
    for face in part.faces:
        face_attrs = dict(attrs)
        face_attrs['roughness'] = float(rng.uniform(*roughness))
        faces.append(Face(id=face.id, surface=face.surface, uv_domain=face.uv_domain, loops=face.loops, attrs=face_attrs))
    return BRepPart(id=part.id, faces=tuple(faces), curves=part.curves)


def generate_synthetic_family(spec: FamilySpec, count: int, seed: int):
    """`count` parts of one family, deterministic in `seed`."""
    spec.validate()
    if count < 0:
        raise SpecError(f'family {spec.name}: count must be >= 0, got {count}')
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(count):
        part_id = f'{spec.name}-{i:04d}'
        dims = {key: float(rng.uniform(*spec.params[key])) for key in TEMPLATE_PARAMS[spec.template]}
        attrs = {
            'material': spec.materials[int(rng.integers(len(spec.materials)))],
            'process': spec.processes[int(rng.integers(len(spec.processes)))],
            'color': spec.colors[int(rng.integers(len(spec.colors)))],
        }
        try:
            part = build_template(part_id, spec.template, dims)
        except GeometryError as e:
            raise SpecError(f'family {spec.name}: jittered parameters {dims} give invalid geometry: {e}')
        parts.append(_with_attrs(part, attrs, rng, spec.roughness))
    logger.debug(f'generated {len(parts)} parts for family {spec.name} (seed={seed})')
    return parts


def generate_dataset(specs, count, seed):
    """Parts of every family plus the part-id to family label map.

    Each family draws from its own stream seeded by (seed, family index).
    """
    parts, labels = [], {}
    for index, spec in enumerate(specs):
        for part in generate_synthetic_family(spec, count, [seed, index]):
            parts.append(part)
            labels[part.id] = spec.name
    return parts, labels
