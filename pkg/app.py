import os
import sys

# Add the project directory to the Python path so `config` and `partsim` import
project_home = os.path.dirname(os.path.abspath(__file__))
if project_home not in sys.path:
    sys.path.insert(0, project_home)

from partsim import create_app  # noqa: E402
from partsim.commands import cli  # noqa: E402

if __name__ == '__main__':
    # Configuration comes from PARTSIM_ENV (or --env); each invocation builds its own app
    cli(prog_name='partsim')
else:
    # `flask --app app partsim ...` loads this one
    app = create_app(os.getenv('PARTSIM_ENV', 'default'))
