import numpy as np
import pytest

from partsim.errors import ConfigError, SchemaError
from partsim.features import AttrSchema, featurize
from partsim.geometry import scale_part, translate_part
from partsim.models import SURFACE_KINDS, BRepPart, Face

SMALL_FACE_GRID = (4, 4)
SMALL_CURVE_GRID = 4


@pytest.fixture
def schema():
    return AttrSchema(categorical={'material': ['aluminum', 'steel']}, real={'roughness': {'mean': 1.0, 'std': 0.5}})


def test_schema_encodes_known_and_unknown_tokens(schema):
    assert schema.encode({'material': 'steel', 'roughness': 2.0}) == [('material', 2), ('roughness', 2.0)]
    assert schema.encode({'material': 'titanium'}) == [('material', 0)]
    assert schema.encode({}) == []


def test_schema_rejects_mistyped_values(schema):
    with pytest.raises(SchemaError):
        schema.encode({'material': 3.0})
    with pytest.raises(SchemaError):
        schema.encode({'roughness': 'smooth'})


def test_dense_vector_decodes_back(schema):
    pairs = schema.encode({'material': 'aluminum', 'roughness': 0.5})
    vector = schema.dense(pairs)
    assert vector.shape == (schema.width,) == (5,)
    assert schema.decode(vector) == pairs


def test_schema_fit_and_file_round_trip(tmp_path, small_corpus):
    parts, _, schema = small_corpus
    assert set(schema.categorical) == {'material', 'process', 'color'}
    assert set(schema.real) == {'roughness'}
    schema.save(tmp_path / 'schema.json')
    assert AttrSchema.load(tmp_path / 'schema.json') == schema


def test_mixed_attribute_kinds_are_rejected(box):
    faces = [Face(id=f.id, surface=f.surface, uv_domain=f.uv_domain, loops=f.loops,
                  attrs={'finish': 'matte' if i == 0 else 1.0}) for i, f in enumerate(box.faces)]
    with pytest.raises(SchemaError):
        AttrSchema.fit([BRepPart(id='mixed', faces=faces, curves=box.curves)])


def test_box_features(box):
    gf, report = featurize(box, AttrSchema(), SMALL_FACE_GRID, SMALL_CURVE_GRID)
    assert gf.face_grids.shape == (6, 4, 4, 7)
    assert gf.curve_grids.shape == (12, 4, 6)
    assert gf.face_product.shape == (6, 0)
    assert set(gf.face_types) == {SURFACE_KINDS.index('plane')}
    # normalized box is 2 x 1 x 0.5 centered at the origin
    assert gf.face_geo.sum() == pytest.approx(7.0, abs=1e-6)
    assert report.nodes == 6 and report.edges == 12
    assert np.all(np.isfinite(gf.face_grids))


def test_features_ignore_rigid_translation_and_scale(box):
    moved = scale_part(translate_part(box, (3.0, -2.0, 5.0)), 4.0)
    a, _ = featurize(box, AttrSchema(), SMALL_FACE_GRID, SMALL_CURVE_GRID)
    b, _ = featurize(moved, AttrSchema(), SMALL_FACE_GRID, SMALL_CURVE_GRID)
    assert a.graph == b.graph
    for name in ('face_grids', 'face_geo', 'curve_grids', 'curve_geo'):
        np.testing.assert_allclose(getattr(a, name), getattr(b, name), atol=1e-9)


def test_cylinder_faces_carry_surface_types(cylinder):
    gf, report = featurize(cylinder, AttrSchema(), SMALL_FACE_GRID, SMALL_CURVE_GRID)
    assert list(gf.face_types) == [0, 0, SURFACE_KINDS.index('cylinder')]
    assert report.seam_curves


def test_face_feature_view(small_dataset):
    gf = small_dataset[0]
    face = gf.face_features(0)
    assert face.face_id == gf.graph.nodes[0]
    assert {name for name, _ in face.product} == {'material', 'process', 'color', 'roughness'}
    assert gf.curve_features(0).curve_id == gf.graph.edges[0].curve_id


def test_grid_sizes_below_two_are_rejected(box):
    with pytest.raises(ConfigError):
        featurize(box, AttrSchema(), (1, 4), SMALL_CURVE_GRID)
