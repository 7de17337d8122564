import numpy as np
import pytest

from partsim.errors import FormatError, StorageError
from partsim.graphcache import read_graph_cache, write_graph_cache
from partsim.partio import atomic_write, read_jsonl, read_parts


@pytest.fixture
def cache_meta(small_corpus):
    _, _, schema = small_corpus
    return {'face_grid': [4, 4], 'curve_grid': 4, 'product_layout': schema.layout, 'seed': 7}


def as_float32(gf):
    return gf.with_arrays(**{name: getattr(gf, name).astype(np.float32)
                             for name in ('face_grids', 'face_geo', 'face_product', 'curve_grids', 'curve_geo')})


def test_cache_round_trip(tmp_path, small_dataset, cache_meta):
    path = tmp_path / 'graphs.psgc'
    write_graph_cache(path, small_dataset, cache_meta)
    meta, records = read_graph_cache(path)
    assert meta['count'] == len(small_dataset)
    assert meta['seed'] == 7
    assert len(records) == len(small_dataset)
    for original, loaded in zip(small_dataset, records):
        assert loaded.equals(as_float32(original))
        assert loaded.product_layout == original.product_layout


def test_cache_bytes_are_deterministic(tmp_path, small_dataset, cache_meta):
    write_graph_cache(tmp_path / 'a.psgc', small_dataset, cache_meta)
    write_graph_cache(tmp_path / 'b.psgc', small_dataset, cache_meta)
    assert (tmp_path / 'a.psgc').read_bytes() == (tmp_path / 'b.psgc').read_bytes()


def test_truncated_cache_is_rejected(tmp_path, small_dataset, cache_meta):
    path = tmp_path / 'graphs.psgc'
    write_graph_cache(path, small_dataset, cache_meta)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError, match='truncated'):
        read_graph_cache(path)


def test_unknown_version_is_rejected(tmp_path, small_dataset, cache_meta):
    path = tmp_path / 'graphs.psgc'
    write_graph_cache(path, small_dataset[:1], cache_meta)
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match='version'):
        read_graph_cache(path)


def test_missing_file_is_a_storage_error(tmp_path):
    with pytest.raises(StorageError):
        read_graph_cache(tmp_path / 'missing.psgc')


def test_malformed_jsonl_names_the_line(tmp_path):
    path = tmp_path / 'parts.jsonl'
    path.write_text('{"id": "a", "faces": []}\n{not json\n')
    with pytest.raises(FormatError) as excinfo:
        read_jsonl(path)
    assert excinfo.value.line == 2
    assert 'parts.jsonl:2' in str(excinfo.value)


def test_invalid_part_names_the_line(tmp_path):
    path = tmp_path / 'parts.jsonl'
    path.write_text('\n{"id": "a", "faces": []}\n')
    with pytest.raises(FormatError) as excinfo:
        read_parts(path)
    assert excinfo.value.line == 2


def test_atomic_write_leaves_no_temporaries(tmp_path):
    atomic_write(tmp_path / 'out' / 'data.bin', b'abc')
    atomic_write(tmp_path / 'out' / 'data.bin', b'xyz')
    assert [p.name for p in (tmp_path / 'out').iterdir()] == ['data.bin']
    assert (tmp_path / 'out' / 'data.bin').read_bytes() == b'xyz'
