from dataclasses import replace

import numpy as np
import pytest

from partsim import create_app
from partsim.encoder import EncoderConfig, init_params
from partsim.families import build_template, default_families, generate_dataset
from partsim.features import AttrSchema, featurize
from partsim.trainer import dataset_encoder_config

SMALL_FACE_GRID = (4, 4)
SMALL_CURVE_GRID = 4


@pytest.fixture(scope='session', autouse=True)
def app():
    """Testing configuration: 64-bit tensors, no progress bars."""
    return create_app('testing')


@pytest.fixture
def box():
    return build_template('box-0', 'box', {'length': 2.0, 'width': 1.0, 'height': 0.5})


@pytest.fixture
def cylinder():
    return build_template('cyl-0', 'capped_cylinder', {'radius': 0.5, 'height': 2.0})


@pytest.fixture(scope='session')
def small_corpus():
    """Three families x four parts: (parts, labels, schema)."""
    parts, labels = generate_dataset(default_families()[:3], 4, seed=7)
    return parts, labels, AttrSchema.fit(parts)


@pytest.fixture(scope='session')
def small_dataset(small_corpus):
    parts, _, schema = small_corpus
    return [featurize(part, schema, SMALL_FACE_GRID, SMALL_CURVE_GRID)[0] for part in parts]


def small_encoder_config(dataset, **overrides):
    base = EncoderConfig(node_dim=12, graph_dim=8, layers=2, node_split=(4, 4, 4), edge_split=(8, 4),
                         cnn_channels=(4,), geo_hidden=8, product_hidden=8, mp_hidden=8)
    return replace(dataset_encoder_config(base, dataset), **overrides)


@pytest.fixture(scope='session')
def small_params(small_dataset):
    return init_params(small_encoder_config(small_dataset), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def encoder_config_for():
    return small_encoder_config
