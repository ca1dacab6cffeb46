"""Periodically refreshed baths: long-time open-system dynamics from
finite-time evolutions with finite chain-mapped baths."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
