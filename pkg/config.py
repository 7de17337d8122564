import os
from dotenv import load_dotenv

basedir = os.path.abspath(os.path.dirname(__file__))

# Load environment variables from .env file
env_path = os.path.join(basedir, '.env')
if os.path.exists(env_path):
    load_dotenv(env_path)


def _grid(value, default):
    if not value:
        return default
    return tuple(int(part) for part in value.lower().replace('x', ',').split(','))


class Config:
    """Base configuration."""
    LOG_LEVEL = os.environ.get('PARTSIM_LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

    SEED = int(os.environ.get('PARTSIM_SEED', 0))

    # Tensor engine precision; checkpoints and indexes are always float32 on disk
    DTYPE = os.environ.get('PARTSIM_DTYPE', 'float32')

    # Sampling resolution
    FACE_GRID = _grid(os.environ.get('PARTSIM_FACE_GRID'), (10, 10))
    CURVE_GRID = int(os.environ.get('PARTSIM_CURVE_GRID', 10))

    PROGRESS = True


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    DEVELOPMENT = True


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False
    TESTING = False
    LOG_LEVEL = os.environ.get('PARTSIM_LOG_LEVEL', 'WARNING').upper()


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    DTYPE = 'float64'
    PROGRESS = False


config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
