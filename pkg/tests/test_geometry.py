import math

import numpy as np
import pytest

from partsim.errors import DegeneratePartError, DomainError, GeometryError
from partsim.families import Circle2D, default_families, extrude_profile, generate_synthetic_family
from partsim.features import sample_curve_grid, sample_face_grid
from partsim.geometry import (curve_length, evaluate_curve, evaluate_surface, face_area, normalize_part,
                              part_bounding_box, project_surface, surface_points)
from partsim.models import BRepPart, Curve, CurveGeometry, Face, SurfaceGeometry


def unit_square_face(**surface):
    return Face(id='F0', surface=SurfaceGeometry(kind='plane', **surface), uv_domain=(0.0, 1.0, 0.0, 1.0))


def test_plane_samples_have_constant_normal_and_full_mask():
    grid = sample_face_grid(unit_square_face(), 10, 10)
    assert grid.shape == (10, 10, 7)
    np.testing.assert_allclose(grid[..., 3:6].reshape(-1, 3), np.tile([0.0, 0.0, 1.0], (100, 1)))
    assert grid[..., 6].all()
    np.testing.assert_allclose(grid[0, 0, :3], [0.0, 0.0, 0.0])
    np.testing.assert_allclose(grid[-1, -1, :3], [1.0, 1.0, 0.0])


def test_reversed_surface_flips_normals():
    _, normal = evaluate_surface(SurfaceGeometry(kind='plane', reversed=True), 0.3, 0.4)
    np.testing.assert_allclose(normal, [0.0, 0.0, -1.0])


def test_cylinder_normals_are_radial():
    surface = SurfaceGeometry(kind='cylinder', radius=0.5, height=2.0)
    u, v = np.meshgrid(np.linspace(0, 2 * math.pi, 12), np.linspace(0, 1, 5), indexing='ij')
    points, normals = surface_points(surface, u, v)
    np.testing.assert_allclose(np.abs(normals @ np.array([0.0, 0.0, 1.0])), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(points[..., :2], axis=-1), 0.5)
    np.testing.assert_allclose(points[..., 2], 2.0 * v)


@pytest.mark.parametrize('surface', [
    SurfaceGeometry(kind='cylinder', radius=0.7, height=1.5),
    SurfaceGeometry(kind='cone', radius=0.5, height=1.0, semi_angle=0.3),
    SurfaceGeometry(kind='sphere', radius=1.2, origin=(1.0, 0.0, -1.0)),
    SurfaceGeometry(kind='torus', radius=2.0, minor_radius=0.5),
    SurfaceGeometry(kind='freeform', control_grid=(((0, 0, 0), (0, 1, 0.2)), ((1, 0, 0.1), (1, 1, 0.5)))),
])
def test_projection_inverts_evaluation(surface):
    rng = np.random.default_rng(0)
    if surface.kind == 'freeform':
        u, v = rng.uniform(0.05, 0.95, 20), rng.uniform(0.05, 0.95, 20)
    elif surface.kind in ('sphere', 'torus'):
        u, v = rng.uniform(0.1, 6.0, 20), rng.uniform(-1.2, 1.2, 20)
    else:
        u, v = rng.uniform(0.1, 6.0, 20), rng.uniform(0.0, 1.0, 20)
    points, _ = surface_points(surface, u, v)
    pu, pv = project_surface(surface, points)
    np.testing.assert_allclose(pu, u, atol=1e-8)
    np.testing.assert_allclose(pv, v, atol=1e-8)


def test_freeform_surface_outside_domain_raises():
    surface = SurfaceGeometry(kind='freeform', control_grid=(((0, 0, 0), (0, 1, 0)), ((1, 0, 0), (1, 1, 0))))
    with pytest.raises(DomainError):
        evaluate_surface(surface, 1.5, 0.5)


def test_curve_parameter_outside_interval_raises():
    with pytest.raises(DomainError):
        evaluate_curve(CurveGeometry(kind='line', start=(0, 0, 0), end=(1, 0, 0)), 1.2)


def test_line_samples_are_collinear_with_constant_tangent():
    curve = Curve(id='C0', geometry=CurveGeometry(kind='line', start=(0, 0, 0), end=(2, 0, 0)))
    grid = sample_curve_grid(curve, 10)
    np.testing.assert_allclose(grid[:, 1:3], 0.0)
    np.testing.assert_allclose(grid[:, 0], np.linspace(0, 2, 10))
    np.testing.assert_allclose(grid[:, 3:], np.tile([1.0, 0.0, 0.0], (10, 1)))
    assert curve_length(curve.geometry) == pytest.approx(2.0)


def test_circle_tangents_turn_by_equal_angles():
    curve = Curve(id='C0', geometry=CurveGeometry(kind='circle', interval=(0.0, 2 * math.pi), radius=1.5))
    grid = sample_curve_grid(curve, 9)
    tangents = grid[:, 3:]
    angles = np.arccos(np.clip(np.sum(tangents[:-1] * tangents[1:], axis=1), -1.0, 1.0))
    np.testing.assert_allclose(angles, 2 * math.pi / 8)
    np.testing.assert_allclose(np.linalg.norm(grid[:, :3], axis=1), 1.5)


@pytest.mark.parametrize('geometry', [
    CurveGeometry(kind='line', start=(0, 0, 0), end=(1, 2, 3)),
    CurveGeometry(kind='freeform', control_points=((0, 0, 0), (1, 0.3, 0), (2, 0.2, 0.1), (3, 0, 0))),
])
def test_chord_sum_approaches_length(geometry):
    t0, t1 = geometry.interval
    points = np.array([evaluate_curve(geometry, t)[0] for t in np.linspace(t0, t1, 400)])
    chords = float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))
    assert chords == pytest.approx(curve_length(geometry), rel=1e-2)


def test_freeform_tangent_matches_central_difference():
    geometry = CurveGeometry(kind='freeform', control_points=((0, 0, 0), (1, 0.3, 0), (2, 0.2, 0.1), (3, 0, 0)))
    h = 1e-6
    for t in np.linspace(0.05, 0.95, 19):
        _, tangent = evaluate_curve(geometry, t)
        chord = evaluate_curve(geometry, t + h)[0] - evaluate_curve(geometry, t - h)[0]
        cosine = float(tangent @ chord) / float(np.linalg.norm(chord))
        assert math.acos(min(cosine, 1.0)) < 1e-3


def test_torus_points_sit_minor_radius_from_the_axis_circle():
    surface = SurfaceGeometry(kind='torus', radius=2.0, minor_radius=0.5)
    u, v = np.meshgrid(np.linspace(0.0, 2 * math.pi, 13), np.linspace(0.0, 2 * math.pi, 11), indexing='ij')
    points, _ = surface_points(surface, u, v)
    points = points.reshape(-1, 3)
    radial = points[:, :2] / np.linalg.norm(points[:, :2], axis=1, keepdims=True)
    on_circle = np.column_stack([2.0 * radial, np.zeros(len(points))])
    np.testing.assert_allclose(np.linalg.norm(points - on_circle, axis=1), 0.5, atol=1e-12)


def test_box_face_areas_sum_to_surface_area(box):
    assert sum(face_area(face, box) for face in box.faces) == pytest.approx(7.0, abs=1e-6)


def test_hole_mask_covers_half_the_face():
    square = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    plate = extrude_profile('plate', square, [Circle2D((0.0, 0.0), math.sqrt(2.0 / math.pi))], 0.5)
    grid = sample_face_grid(plate.face('F1'), 200, 200, plate)
    assert grid[..., 6].mean() == pytest.approx(0.5, abs=0.05)
    assert face_area(plate.face('F1'), plate) == pytest.approx(2.0, rel=1e-2)
    # masked samples carry zeros
    outside = grid[..., 6] == 0
    assert np.all(grid[outside][:, :6] == 0.0)


def test_normalize_maps_longest_side_to_unit_interval(box):
    lo, hi = part_bounding_box(normalize_part(box))
    np.testing.assert_allclose(lo, [-1.0, -0.5, -0.25], atol=1e-9)
    np.testing.assert_allclose(hi, [1.0, 0.5, 0.25], atol=1e-9)


def test_normalize_is_idempotent(cylinder):
    once = normalize_part(cylinder)
    assert normalize_part(once) == once


@pytest.mark.parametrize('seed', range(5))
@pytest.mark.parametrize('spec', default_families(), ids=lambda spec: spec.name)
def test_normalize_is_idempotent_on_every_family(spec, seed):
    for part in generate_synthetic_family(spec, 2, seed):
        once = normalize_part(part)
        assert normalize_part(once) == once
        lo, hi = part_bounding_box(once)
        assert np.max(hi - lo) == pytest.approx(2.0, abs=1e-9)
        np.testing.assert_allclose(0.5 * (lo + hi), 0.0, atol=1e-9)


def test_zero_extent_part_is_degenerate():
    face = Face(id='F0', surface=SurfaceGeometry(kind='plane'), uv_domain=(0.0, 1e-14, 0.0, 1e-14))
    with pytest.raises(DegeneratePartError):
        normalize_part(BRepPart(id='dot', faces=(face,)))


def test_invalid_geometry_is_rejected():
    with pytest.raises(GeometryError):
        SurfaceGeometry(kind='cylinder', radius=0.0, height=1.0)
    with pytest.raises(GeometryError):
        SurfaceGeometry(kind='plane', axis=(0, 0, 1), ref_dir=(0, 0, 1))
    with pytest.raises(GeometryError):
        Face(id='F0', surface=SurfaceGeometry(kind='plane'), uv_domain=(0.0, 0.0, 0.0, 1.0))
