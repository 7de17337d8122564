"""
Parametric geometry: surface and curve evaluation, inversion, trimming,
measures and part normalization.

All evaluators are vectorised over numpy arrays of parameters; the scalar
entry points `evaluate_surface` and `evaluate_curve` wrap them.
"""

import logging
import math
from dataclasses import replace
from math import comb

import numpy as np

from partsim.errors import DegeneratePartError, DomainError
from partsim.models import BRepPart, Curve, CurveGeometry, Face, SurfaceGeometry

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
PARAM_TOLERANCE = 1e-12
LOOP_SAMPLES = 65
NORMALIZE_DECIMALS = 10
# fixed-point test for a part already on the rounding grid
NORMALIZE_CENTER_TOLERANCE = 1e-9
NORMALIZE_SCALE_TOLERANCE = 1e-9
PERIODIC_KINDS = ('cylinder', 'cone', 'sphere', 'torus')


def _frame(axis, ref_dir):
    z = np.asarray(axis, dtype=np.float64)
    x = np.asarray(ref_dir, dtype=np.float64)
    return x, np.cross(z, x), z


def _unit(vectors, what):
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    if np.any(norms < 1e-14):
        raise DomainError(f'{what} is degenerate (zero length)')
    return vectors / norms


def _outer(scalar, vec):
    return np.asarray(scalar, dtype=np.float64)[..., None] * vec


def _bernstein(degree, t):
    t = np.asarray(t, dtype=np.float64)[..., None]
    i = np.arange(degree + 1)
    coeff = np.array([comb(degree, k) for k in range(degree + 1)], dtype=np.float64)
    return coeff * t ** i * (1.0 - t) ** (degree - i)


def _bernstein_derivative(degree, t):
    lower = _bernstein(degree - 1, t)
    pad = np.zeros(lower.shape[:-1] + (1,))
    return degree * (np.concatenate([pad, lower], axis=-1) - np.concatenate([lower, pad], axis=-1))


def _check_unit_square(u, v, what):
    lo, hi = -PARAM_TOLERANCE, 1.0 + PARAM_TOLERANCE
    if np.any((u < lo) | (u > hi) | (v < lo) | (v > hi)):
        raise DomainError(f'{what} evaluated outside its control domain [0, 1]^2')


# -- surfaces -----------------------------------------------------------------

def surface_derivatives(surface: SurfaceGeometry, u, v):
    """Return (point, dP/du, dP/dv) arrays of shape (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if surface.kind == 'freeform':
        _check_unit_square(u, v, 'freeform surface')
        grid = np.asarray(surface.control_grid, dtype=np.float64)
        m, n = grid.shape[0] - 1, grid.shape[1] - 1
        bu, bv = _bernstein(m, u), _bernstein(n, v)
        du, dv = _bernstein_derivative(m, u), _bernstein_derivative(n, v)
        point = np.einsum('...i,...j,ijk->...k', bu, bv, grid)
        pu = np.einsum('...i,...j,ijk->...k', du, bv, grid)
        pv = np.einsum('...i,...j,ijk->...k', bu, dv, grid)
        return point, pu, pv

    x, y, z = _frame(surface.axis, surface.ref_dir)
    o = np.asarray(surface.origin, dtype=np.float64)
    if surface.kind == 'plane':
        point = o + _outer(u, x) + _outer(v, y)
        shape = point.shape
        return point, np.broadcast_to(x, shape), np.broadcast_to(y, shape)

    radial = _outer(np.cos(u), x) + _outer(np.sin(u), y)
    tangential = _outer(-np.sin(u), x) + _outer(np.cos(u), y)
    r = surface.radius
    if surface.kind == 'cylinder':
        h = surface.height
        point = o + r * radial + _outer(v * h, z)
        return point, r * tangential, np.broadcast_to(h * z, point.shape)
    if surface.kind == 'cone':
        h, slope = surface.height, math.tan(surface.semi_angle)
        rv = r + v * h * slope
        point = o + _outer(rv, radial) + _outer(v * h, z)
        return point, _outer(rv, tangential), h * slope * radial + np.broadcast_to(h * z, point.shape)
    if surface.kind == 'sphere':
        point = o + r * (_outer(np.cos(v), radial) + _outer(np.sin(v), z))
        pu = _outer(r * np.cos(v), tangential)
        pv = r * (_outer(-np.sin(v), radial) + _outer(np.cos(v), z))
        return point, pu, pv
    # torus
    minor = surface.minor_radius
    ring = r + minor * np.cos(v)
    point = o + _outer(ring, radial) + _outer(minor * np.sin(v), z)
    pu = _outer(ring, tangential)
    pv = minor * (_outer(-np.sin(v), radial) + _outer(np.cos(v), z))
    return point, pu, pv


def surface_points(surface: SurfaceGeometry, u, v):
    """Vectorised evaluation: (points, unit normals), each of shape (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    point, pu, pv = surface_derivatives(surface, u, v)
    if surface.kind == 'freeform':
        normal = _unit(np.cross(pu, pv), 'freeform surface normal')
    else:
        x, y, z = _frame(surface.axis, surface.ref_dir)
        if surface.kind == 'plane':
            normal = np.broadcast_to(z, point.shape).copy()
        else:
            radial = _outer(np.cos(u), x) + _outer(np.sin(u), y)
            if surface.kind == 'cylinder':
                normal = radial
            elif surface.kind == 'cone':
                a = surface.semi_angle
                normal = math.cos(a) * radial - math.sin(a) * np.broadcast_to(z, point.shape)
            else:
                normal = _outer(np.cos(v), radial) + _outer(np.sin(v), z)
        normal = normal / np.linalg.norm(normal, axis=-1, keepdims=True)
    if surface.reversed:
        normal = -normal
    return point, normal


def evaluate_surface(surface: SurfaceGeometry, u: float, v: float):
    """Point and unit normal of `surface` at (u, v)."""
    point, normal = surface_points(surface, u, v)
    return point.reshape(3), normal.reshape(3)


def project_surface(surface: SurfaceGeometry, points, u_start=0.0):
    """Invert the parametrisation: (u, v) of points lying on the surface.

    Angular parameters are wrapped into [u_start, u_start + 2*pi).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if surface.kind == 'freeform':
        return _project_freeform(surface, points)
    x, y, z = _frame(surface.axis, surface.ref_dir)
    d = points - np.asarray(surface.origin, dtype=np.float64)
    dx, dy, dz = d @ x, d @ y, d @ z
    if surface.kind == 'plane':
        return dx, dy
    u = u_start + np.mod(np.arctan2(dy, dx) - u_start, TWO_PI)
    if surface.kind in ('cylinder', 'cone'):
        return u, dz / surface.height
    if surface.kind == 'sphere':
        return u, np.arcsin(np.clip(dz / np.linalg.norm(d, axis=1), -1.0, 1.0))
    rho = np.hypot(dx, dy) - surface.radius
    return u, np.arctan2(dz, rho)


def _project_freeform(surface, points, iterations=20):
    coarse = np.linspace(0.0, 1.0, 17)
    gu, gv = np.meshgrid(coarse, coarse, indexing='ij')
    grid_points, _, _ = surface_derivatives(surface, gu.ravel(), gv.ravel())
    dist = np.linalg.norm(points[:, None, :] - grid_points[None, :, :], axis=2)
    best = np.argmin(dist, axis=1)
    u, v = gu.ravel()[best], gv.ravel()[best]
    for _ in range(iterations):
        p, pu, pv = surface_derivatives(surface, u, v)
        r = p - points
        a11 = np.einsum('ij,ij->i', pu, pu)
        a12 = np.einsum('ij,ij->i', pu, pv)
        a22 = np.einsum('ij,ij->i', pv, pv)
        b1 = np.einsum('ij,ij->i', pu, r)
        b2 = np.einsum('ij,ij->i', pv, r)
        det = a11 * a22 - a12 * a12
        safe = np.where(np.abs(det) < 1e-18, 1.0, det)
        du = np.where(np.abs(det) < 1e-18, 0.0, (a22 * b1 - a12 * b2) / safe)
        dv = np.where(np.abs(det) < 1e-18, 0.0, (a11 * b2 - a12 * b1) / safe)
        u = np.clip(u - du, 0.0, 1.0)
        v = np.clip(v - dv, 0.0, 1.0)
    return u, v


# -- curves -------------------------------------------------------------------

def curve_points(curve: CurveGeometry, t):
    """Vectorised evaluation: (points, unit tangents), each of shape (..., 3)."""
    t = np.asarray(t, dtype=np.float64)
    t0, t1 = curve.interval
    if np.any((t < t0 - PARAM_TOLERANCE) | (t > t1 + PARAM_TOLERANCE)):
        raise DomainError(f'curve parameter outside interval [{t0}, {t1}]')
    if curve.kind == 'line':
        start = np.asarray(curve.start, dtype=np.float64)
        chord = np.asarray(curve.end, dtype=np.float64) - start
        point = start + _outer(t, chord)
        tangent = np.broadcast_to(chord / np.linalg.norm(chord), point.shape).copy()
        return point, tangent
    if curve.kind == 'circle':
        x, y, _ = _frame(curve.axis, curve.ref_dir)
        c = np.asarray(curve.center, dtype=np.float64)
        point = c + curve.radius * (_outer(np.cos(t), x) + _outer(np.sin(t), y))
        tangent = _outer(-np.sin(t), x) + _outer(np.cos(t), y)
        return point, tangent / np.linalg.norm(tangent, axis=-1, keepdims=True)
    ctrl = np.asarray(curve.control_points, dtype=np.float64)
    degree = len(ctrl) - 1
    point = _bernstein(degree, t) @ ctrl
    derivative = _bernstein_derivative(degree, t) @ ctrl
    return point, _unit(derivative, 'freeform curve tangent')


def evaluate_curve(curve: CurveGeometry, t: float):
    """Point and unit tangent of `curve` at t."""
    point, tangent = curve_points(curve, t)
    return point.reshape(3), tangent.reshape(3)


def curve_length(curve: CurveGeometry):
    t0, t1 = curve.interval
    if curve.kind == 'line':
        chord = np.subtract(curve.end, curve.start)
        return float(np.linalg.norm(chord) * (t1 - t0))
    if curve.kind == 'circle':
        return float(curve.radius * (t1 - t0))
    nodes, weights = np.polynomial.legendre.leggauss(32)
    t = 0.5 * (t1 - t0) * nodes + 0.5 * (t1 + t0)
    ctrl = np.asarray(curve.control_points, dtype=np.float64)
    speed = np.linalg.norm(_bernstein_derivative(len(ctrl) - 1, t) @ ctrl, axis=1)
    return float(0.5 * (t1 - t0) * np.dot(weights, speed))


# -- trimming -----------------------------------------------------------------

def _domain_scale(face):
    u0, u1, v0, v1 = face.uv_domain
    return max(u1 - u0, v1 - v0)


def _loop_polyline(face: Face, part: BRepPart, loop):
    pieces = []
    for curve_id in loop:
        geometry = part.curve(curve_id).geometry
        t = np.linspace(geometry.interval[0], geometry.interval[1], LOOP_SAMPLES)
        points, _ = curve_points(geometry, t)
        u, v = project_surface(face.surface, points, u_start=face.uv_domain[0])
        pieces.append(np.stack([u, v], axis=1))
    if len(pieces) > 1:
        first, second = pieces[0], pieces[1]
        end_gap = min(np.linalg.norm(first[-1] - second[0]), np.linalg.norm(first[-1] - second[-1]))
        start_gap = min(np.linalg.norm(first[0] - second[0]), np.linalg.norm(first[0] - second[-1]))
        if start_gap < end_gap:
            pieces[0] = first[::-1]
    chain = [pieces[0]]
    for piece in pieces[1:]:
        tail = chain[-1][-1]
        if np.linalg.norm(tail - piece[-1]) < np.linalg.norm(tail - piece[0]):
            piece = piece[::-1]
        chain.append(piece)
    return np.concatenate(chain, axis=0)


def _is_closed_polygon(polyline, scale):
    if len(polyline) < 4:
        return False
    if np.linalg.norm(polyline[0] - polyline[-1]) > 1e-6 * scale:
        return False
    if np.max(np.linalg.norm(np.diff(polyline, axis=0), axis=1)) > 0.5 * scale:
        return False
    x, y = polyline[:, 0], polyline[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return area > 1e-12 * scale * scale


def loop_polygons(face: Face, part: BRepPart):
    """Closed uv-space polygons of the face loops.

    Returns (outer, holes): outer is None when the outer loop does not close in
    parameter space (seamed periodic faces), in which case the uv-domain is the
    outer boundary.
    """
    scale = _domain_scale(face)
    outer, holes = None, []
    for index, loop in enumerate(face.loops):
        if not loop:
            continue
        polyline = _loop_polyline(face, part, loop)
        if not _is_closed_polygon(polyline, scale):
            logger.debug(f'face {face.id}: loop {index} does not close in uv-space, not used for trimming')
            continue
        if index == 0:
            outer = polyline
        else:
            holes.append(polyline)
    return outer, holes


def _polygon_contains(polygon, pu, pv, tolerance):
    """Even-odd containment, samples on the boundary count as contained."""
    inside = np.zeros(pu.shape, dtype=bool)
    on_edge = np.zeros(pu.shape, dtype=bool)
    xs, ys = polygon[:, 0], polygon[:, 1]
    for i in range(len(polygon) - 1):
        xi, yi, xj, yj = xs[i], ys[i], xs[i + 1], ys[i + 1]
        dx, dy = xj - xi, yj - yi
        length2 = dx * dx + dy * dy
        if length2 > 0.0:
            s = np.clip(((pu - xi) * dx + (pv - yi) * dy) / length2, 0.0, 1.0)
            on_edge |= np.hypot(pu - (xi + s * dx), pv - (yi + s * dy)) <= tolerance
        crosses = (yi > pv) != (yj > pv)
        if np.any(crosses):
            with np.errstate(divide='ignore', invalid='ignore'):
                x_cross = xi + (pv - yi) * dx / dy
            inside ^= crosses & (pu < x_cross)
    return inside | on_edge


def trim_mask(face: Face, part: BRepPart, u, v, polygons=None):
    """Boolean mask of parameter samples lying inside the trimmed face (even-odd rule)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    outer, holes = polygons if polygons is not None else loop_polygons(face, part)
    tolerance = 1e-9 * _domain_scale(face) + 1e-12
    u0, u1, v0, v1 = face.uv_domain
    in_domain = (u >= u0 - tolerance) & (u <= u1 + tolerance) & (v >= v0 - tolerance) & (v <= v1 + tolerance)
    crossings = np.ones(u.shape, dtype=np.int64) if outer is None else _polygon_contains(outer, u, v, tolerance).astype(np.int64)
    for hole in holes:
        crossings += _polygon_contains(hole, u, v, tolerance)
    return in_domain & (crossings % 2 == 1)


def face_area(face: Face, part: BRepPart, resolution=128):
    """Area of the trimmed face.

    Untrimmed faces use 16x16 Gauss-Legendre quadrature of |dP/du x dP/dv|;
    trimmed faces use the masked midpoint rule at `resolution`.
    """
    u0, u1, v0, v1 = face.uv_domain
    polygons = loop_polygons(face, part)
    ticks = (np.arange(64) + 0.5) / 64
    pu, pv = np.meshgrid(u0 + ticks * (u1 - u0), v0 + ticks * (v1 - v0), indexing='ij')
    if trim_mask(face, part, pu, pv, polygons).all():
        nodes, weights = np.polynomial.legendre.leggauss(16)
        gu = 0.5 * (u1 - u0) * nodes + 0.5 * (u1 + u0)
        gv = 0.5 * (v1 - v0) * nodes + 0.5 * (v1 + v0)
        mu, mv = np.meshgrid(gu, gv, indexing='ij')
        _, du, dv = surface_derivatives(face.surface, mu, mv)
        jacobian = np.linalg.norm(np.cross(du, dv), axis=-1)
        return float(0.25 * (u1 - u0) * (v1 - v0) * weights @ jacobian @ weights)
    mid = (np.arange(resolution) + 0.5) / resolution
    mu, mv = np.meshgrid(u0 + mid * (u1 - u0), v0 + mid * (v1 - v0), indexing='ij')
    _, du, dv = surface_derivatives(face.surface, mu, mv)
    jacobian = np.linalg.norm(np.cross(du, dv), axis=-1)
    cell = (u1 - u0) * (v1 - v0) / (resolution * resolution)
    return float(np.sum(jacobian * trim_mask(face, part, mu, mv, polygons)) * cell)


# -- normalization ------------------------------------------------------------

def part_bounding_box(part: BRepPart, face_samples=9, curve_samples=33):
    """Axis-aligned (lo, hi) corners from curve samples and trimmed face samples."""
    chunks = []
    for curve in part.curves:
        t = np.linspace(curve.geometry.interval[0], curve.geometry.interval[1], curve_samples)
        chunks.append(curve_points(curve.geometry, t)[0])
    grid = np.linspace(0.0, 1.0, face_samples)
    for face in part.faces:
        u0, u1, v0, v1 = face.uv_domain
        mu, mv = np.meshgrid(u0 + grid * (u1 - u0), v0 + grid * (v1 - v0), indexing='ij')
        points, _ = surface_points(face.surface, mu, mv)
        mask = trim_mask(face, part, mu, mv)
        chunks.append(points[mask])
    points = np.concatenate([c.reshape(-1, 3) for c in chunks], axis=0)
    return points.min(axis=0), points.max(axis=0)


def _round(value):
    # adding 0.0 folds -0.0 into 0.0
    return float(np.round(value, NORMALIZE_DECIMALS)) + 0.0


def _map_point(point, center, scale):
    return tuple(_round((p - c) * scale) for p, c in zip(point, center))


def _transform_surface(surface, center, scale):
    if surface.kind == 'freeform':
        grid = tuple(tuple(_map_point(p, center, scale) for p in row) for row in surface.control_grid)
        return replace(surface, control_grid=grid)
    return replace(
        surface,
        origin=_map_point(surface.origin, center, scale),
        radius=_round(surface.radius * scale),
        minor_radius=_round(surface.minor_radius * scale),
        height=_round(surface.height * scale),
    )


def _transform_curve(geometry, center, scale):
    if geometry.kind == 'freeform':
        return replace(geometry, control_points=tuple(_map_point(p, center, scale) for p in geometry.control_points))
    return replace(
        geometry,
        start=_map_point(geometry.start, center, scale),
        end=_map_point(geometry.end, center, scale),
        center=_map_point(geometry.center, center, scale),
        radius=_round(geometry.radius * scale),
    )


def _transform_face(face, center, scale):
    domain = face.uv_domain
    if face.surface.kind == 'plane':
        # plane parameters are lengths measured from the (moving) origin
        domain = tuple(_round(x * scale) for x in domain)
    return replace(face, surface=_transform_surface(face.surface, center, scale), uv_domain=domain)


def normalize_part(part: BRepPart) -> BRepPart:
    """Center the bounding box at the origin and map its longest side to [-1, 1]."""
    lo, hi = part_bounding_box(part)
    extent = float(np.max(hi - lo))
    if not extent > 1e-12:
        raise DegeneratePartError(f'part {part.id}: zero-extent bounding box')
    center = 0.5 * (lo + hi)
    scale = 2.0 / extent
    if np.max(np.abs(center)) <= NORMALIZE_CENTER_TOLERANCE and abs(scale - 1.0) <= NORMALIZE_SCALE_TOLERANCE:
        return part
    faces = tuple(_transform_face(f, center, scale) for f in part.faces)
    curves = tuple(
        Curve(id=c.id, geometry=_transform_curve(c.geometry, center, scale), adjacent_faces=c.adjacent_faces)
        for c in part.curves
    )
    return BRepPart(id=part.id, faces=faces, curves=curves)


def translate_part(part: BRepPart, offset) -> BRepPart:
    """Rigidly translate a part (used to build invariance fixtures)."""
    offset = np.asarray(offset, dtype=np.float64)
    return _affine(part, -offset, 1.0)


def scale_part(part: BRepPart, factor: float) -> BRepPart:
    """Uniformly scale a part about the origin."""
    return _affine(part, np.zeros(3), float(factor))


def _affine(part, shift, factor):
    # p -> (p - shift) * factor, without rounding
    def point(p):
        return tuple(float((a - s) * factor) for a, s in zip(p, shift))

    def surface(s):
        if s.kind == 'freeform':
            return replace(s, control_grid=tuple(tuple(point(p) for p in row) for row in s.control_grid))
        return replace(s, origin=point(s.origin), radius=s.radius * factor,
                       minor_radius=s.minor_radius * factor, height=s.height * factor)

    def curve(g):
        if g.kind == 'freeform':
            return replace(g, control_points=tuple(point(p) for p in g.control_points))
        return replace(g, start=point(g.start), end=point(g.end), center=point(g.center), radius=g.radius * factor)

    faces = []
    for f in part.faces:
        domain = f.uv_domain
        if f.surface.kind == 'plane':
            domain = tuple(x * factor for x in domain)
        faces.append(replace(f, surface=surface(f.surface), uv_domain=domain))
    curves = [Curve(id=c.id, geometry=curve(c.geometry), adjacent_faces=c.adjacent_faces) for c in part.curves]
    return BRepPart(id=part.id, faces=tuple(faces), curves=tuple(curves))
