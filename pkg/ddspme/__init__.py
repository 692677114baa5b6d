import os
from importlib.metadata import PackageNotFoundError, version

from ddspme.config import PROJECT_DIR

NAME = 'ddspme-lab'


def _read_version():
    path = os.path.join(PROJECT_DIR, 'VERSION')
    if os.path.exists(path):
        with open(path, 'r', encoding='utf-8') as f:
            return f.readline().strip()
    try:
        return version(NAME)
    except PackageNotFoundError:
        return '0.0.0'


__version__ = _read_version()
