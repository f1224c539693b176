"""Majorize-minimize algorithms for statistical estimation and image restoration."""

from importlib.resources import files as _files

__version__ = "0.1.0"


def dataset_path(name: str):
    """Path to a bundled CSV such as ``"separable_binary.csv"``."""
    path = _files(__name__) / "data" / name
    if not path.is_file():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return path
