import logging

from flask import Flask

from config import config
from partsim.errors import ConfigError
from partsim.nn import set_default_dtype

__version__ = '0.1.0'


def create_app(config_name='default'):
    """Application factory pattern."""
    if config_name not in config:
        raise ConfigError(f'unknown configuration {config_name!r}; expected one of {sorted(config)}')
    app = Flask(__name__)

    # Load configuration
    app.config.from_object(config[config_name])
    app.config['ENV'] = config_name

    # Tensor engine precision
    set_default_dtype(app.config['DTYPE'])

    # One stream handler on the package logger, bound to the current stderr;
    # module loggers propagate to it
    level = logging.getLevelName(app.config['LOG_LEVEL'])
    app.logger.setLevel(level if isinstance(level, int) else logging.INFO)
    for old in list(app.logger.handlers):
        app.logger.removeHandler(old)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(app.config['LOG_FORMAT']))
    app.logger.addHandler(handler)

    # Register CLI commands so `flask --app app partsim ...` works too
    from partsim import commands
    app.cli.add_command(commands.cli, 'partsim')

    return app
