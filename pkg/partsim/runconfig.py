"""
Merged run configuration: app config, then a YAML/JSON config file, then flags.

Config file layout (every key optional):

    seed: 0
    face_grid: [10, 10]
    curve_grid: 10
    encoder: {layers: 5, node_dim: 128, ...}
    train: {batch_size: 32, temperature: 1.0, lr: 0.001, ...}
    augment: {alpha: 0.1, beta: 0.1, scheme: Node, granularity: group}
"""

from dataclasses import dataclass, field, replace

import yaml

from partsim.augment import AugmentConfig
from partsim.encoder import EncoderConfig
from partsim.errors import ConfigError, FormatError
from partsim.partio import json_digest, read_bytes
from partsim.trainer import TrainConfig

TRAIN_FLAGS = ('batch_size', 'temperature', 'lr', 'min_epochs', 'max_epochs', 'patience',
               'symmetric', 'include_positive')
AUGMENT_FLAGS = ('alpha', 'beta', 'scheme', 'granularity')
ENCODER_FLAGS = ('layers', 'graph_dim', 'gate', 'dropout')


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    face_grid: tuple = (10, 10)
    curve_grid: int = 10
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    source: str = field(default=None, compare=False)

    def to_dict(self):
        return {
            'seed': self.seed,
            'face_grid': list(self.face_grid),
            'curve_grid': self.curve_grid,
            'encoder': self.encoder.to_dict(),
            'train': self.train.to_dict(),
        }

    @property
    def config_hash(self):
        """sha256 of the canonical JSON form; recorded in every artifact."""
        return json_digest(self.to_dict())

    def stamp(self, **extra):
        """Metadata block for an output artifact."""
        return dict(extra, seed=self.seed, config_hash=self.config_hash)

    def validate(self):
        self.encoder.validate()
        self.train.validate()
        return self


def read_config_file(path):
    try:
        data = yaml.safe_load(read_bytes(path).decode('utf-8'))
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise FormatError(path, f'invalid config file: {e}', line=mark.line + 1 if mark else None)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise FormatError(path, 'config file must hold a mapping')
    return data


def _section(data, name):
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f'config section {name!r} must be a mapping')
    return dict(section)


def load_run_config(path=None, app_config=None, **flags):
    """Build a RunConfig; flags set to None leave the file or default value alone."""
    app_config = app_config or {}
    data = read_config_file(path) if path else {}
    unknown = set(data) - {'seed', 'face_grid', 'curve_grid', 'encoder', 'train', 'augment'}
    if unknown:
        raise ConfigError(f'unknown config keys {sorted(unknown)}')
    flags = {k: v for k, v in flags.items() if v is not None}
    unknown = set(flags) - set(TRAIN_FLAGS + AUGMENT_FLAGS + ENCODER_FLAGS + ('seed', 'face_grid', 'curve_grid'))
    if unknown:
        raise ConfigError(f'unknown settings {sorted(unknown)}')

    seed = int(flags.get('seed', data.get('seed', app_config.get('SEED', 0))))
    face_grid = tuple(flags.get('face_grid', data.get('face_grid', app_config.get('FACE_GRID', (10, 10)))))
    curve_grid = int(flags.get('curve_grid', data.get('curve_grid', app_config.get('CURVE_GRID', 10))))

    augment = _section(data, 'augment')
    augment.update({k: flags[k] for k in AUGMENT_FLAGS if k in flags})
    train = _section(data, 'train')
    train.update({k: flags[k] for k in TRAIN_FLAGS if k in flags})
    encoder = _section(data, 'encoder')
    encoder.update({k: flags[k] for k in ENCODER_FLAGS if k in flags})

    try:
        augment_cfg = AugmentConfig(**dict(augment, seed=seed))
    except TypeError as e:
        raise ConfigError(f'invalid augment config: {e}')
    train_cfg = replace(TrainConfig.from_dict(dict(train, seed=seed)), augment=augment_cfg)
    encoder_cfg = EncoderConfig.from_dict(dict(encoder, face_grid=face_grid, curve_grid=curve_grid))
    return RunConfig(seed=seed, face_grid=face_grid, curve_grid=curve_grid, encoder=encoder_cfg,
                     train=train_cfg, source=str(path) if path else None).validate()
