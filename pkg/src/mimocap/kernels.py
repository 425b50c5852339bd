"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise (or when
``MIMOCAP_PURE_PYTHON`` is set to a non-empty value) the numpy fallback in
``_pycore`` is used. Both expose ``fixed_point`` and ``batch_logdet``.
"""

import importlib
import os

from . import _pycore

_BACKENDS = {"python": _pycore}

try:
    _BACKENDS["cython"] = importlib.import_module("mimocap._core")
except ImportError:
    pass

if os.environ.get("MIMOCAP_PURE_PYTHON") or "cython" not in _BACKENDS:
    BACKEND = "python"
else:
    BACKEND = "cython"


def available_backends():
    return tuple(sorted(_BACKENDS))


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the selected one)."""
    name = BACKEND if name is None else name
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"kernel backend {name!r} unavailable; have {available_backends()}"
        ) from None
