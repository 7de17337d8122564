import pytest

from partsim.errors import SpecError
from partsim.families import (COLORS, MATERIALS, PROCESSES, FamilySpec, build_template, default_families,
                              generate_dataset, generate_synthetic_family)
from partsim.geometry import face_area
from partsim.partio import read_parts, write_parts
from partsim.topology import build_graph


def test_generation_is_deterministic():
    spec = default_families()[0]
    assert generate_synthetic_family(spec, 5, 11) == generate_synthetic_family(spec, 5, 11)
    assert generate_synthetic_family(spec, 5, 11) != generate_synthetic_family(spec, 5, 12)


def test_dataset_labels_every_part():
    specs = default_families()[:4]
    parts, labels = generate_dataset(specs, 3, seed=0)
    assert len(parts) == 12
    assert set(labels) == {p.id for p in parts}
    assert sorted(set(labels.values())) == sorted(s.name for s in specs)
    assert parts[0].id == 'block-0000'


def test_every_default_family_builds():
    parts, _ = generate_dataset(default_families(), 2, seed=3)
    assert len(parts) == 20
    for part in parts:
        face = part.faces[0]
        assert {'material', 'process', 'color', 'roughness'} <= set(face.attrs)


def test_parts_survive_jsonl(tmp_path):
    parts, _ = generate_dataset(default_families(), 1, seed=5)
    write_parts(tmp_path / 'parts.jsonl', parts)
    assert read_parts(tmp_path / 'parts.jsonl') == parts


@pytest.mark.parametrize('spec', [
    FamilySpec('x', 'pyramid', {}),
    FamilySpec('x', 'box', {'length': (1.0, 2.0)}),
    FamilySpec('x', 'box', {'length': (2.0, 1.0), 'width': (1.0, 1.0), 'height': (1.0, 1.0)}),
    FamilySpec('x', 'box', {'length': (1.0, 2.0), 'width': (1.0, 1.0), 'height': (1.0, 1.0)}, materials=()),
])
def test_invalid_specs_are_rejected(spec):
    with pytest.raises(SpecError):
        spec.validate()


def test_spec_dict_round_trip():
    spec = default_families()[4]
    assert FamilySpec.from_dict(spec.to_dict()) == spec


def test_malformed_spec_dict():
    with pytest.raises(SpecError):
        FamilySpec.from_dict({'name': 'x'})


def test_template_constraints():
    with pytest.raises(SpecError):
        build_template('b', 'l_bracket', {'length': 1.0, 'width': 1.0, 'height': 1.0, 'thickness': 1.5})
    with pytest.raises(SpecError):
        build_template('r', 'ring', {'outer_radius': 0.5, 'inner_radius': 0.7, 'height': 1.0})
    with pytest.raises(SpecError):
        build_template('b', 'box', {'length': -1.0, 'width': 1.0, 'height': 1.0})


def test_jitter_that_breaks_geometry_is_a_spec_error():
    spec = FamilySpec('bad', 'ring', {'outer_radius': (0.5, 0.6), 'inner_radius': (0.8, 0.9), 'height': (1.0, 1.0)})
    with pytest.raises(SpecError):
        generate_synthetic_family(spec, 1, 0)


def test_families_share_attribute_vocabularies():
    specs = default_families()
    assert all((s.materials, s.processes, s.colors) == (MATERIALS, PROCESSES, COLORS) for s in specs)
    parts, labels = generate_dataset(specs, 20, seed=0)
    materials = {}
    for part in parts:
        materials.setdefault(labels[part.id], set()).add(part.faces[0].attrs['material'])
    # twenty draws from three tokens: every family sees more than one
    assert all(len(tokens) > 1 for tokens in materials.values())


def test_several_families_share_a_template():
    templates = [s.template for s in default_families()]
    assert len(set(templates)) < len(templates)
    assert templates.count('box') == 3


@pytest.mark.parametrize('spec', default_families(), ids=lambda spec: spec.name)
def test_family_topology_is_fixed_across_jitter(spec):
    parts = generate_synthetic_family(spec, 20, 7)
    counts = set()
    for part in parts:
        graph, report = build_graph(part)
        assert not report.duplicate_edges
        assert all(e.u in graph.nodes and e.v in graph.nodes for e in graph.edges)
        counts.add((len(graph.nodes), len(graph.edges)))
    assert len(counts) == 1


def test_box_and_bracket_families():
    by_name = {s.name: s for s in default_families()}
    for part in generate_synthetic_family(by_name['block'], 20, 7):
        graph, _ = build_graph(part)
        assert (len(graph.nodes), len(graph.edges)) == (6, 12)
    brackets = generate_synthetic_family(by_name['bracket'], 20, 7)
    areas = {round(face_area(part.face('F0'), part), 9) for part in brackets}
    assert len(areas) == 20
