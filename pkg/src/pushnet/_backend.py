"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python twin
is the fallback. ``PUSHNET_BACKEND`` (``auto``/``cython``/``python``)
overrides the default, and every public entry point that runs a kernel
also takes an explicit ``backend=`` argument.
"""

from __future__ import annotations

import os

from . import _pushpy
from .errors import ConfigurationError

try:
    from . import _pushcore
except ImportError:  # extension not built; pure-Python twin takes over
    _pushcore = None

_BACKENDS = {"python": _pushpy}
if _pushcore is not None:
    _BACKENDS["cython"] = _pushcore


def default_backend() -> str:
    forced = os.environ.get("PUSHNET_BACKEND", "auto").strip().lower()
    if forced in ("", "auto"):
        return "cython" if _pushcore is not None else "python"
    if forced not in ("python", "cython"):
        raise ConfigurationError(f"PUSHNET_BACKEND must be auto/python/cython, got {forced!r}")
    return forced


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_kernels(backend: str | None = None):
    """Resolve a backend name (or None for the default) to a kernel module."""
    name = default_backend() if backend is None else backend
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ConfigurationError(
            f"backend {name!r} unavailable (have: {', '.join(available_backends())})"
        ) from None
