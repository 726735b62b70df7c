from importlib.metadata import PackageNotFoundError, version

from ._version import __version__ as _fallback_version

try:
    __version__ = version("robust-renyi")
except PackageNotFoundError:
    __version__ = _fallback_version

__all__ = ["__version__"]
