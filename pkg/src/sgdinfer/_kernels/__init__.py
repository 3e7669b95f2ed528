"""Backend selection for the recursion kernels.

The compiled extension is preferred when importable; setting the
environment variable ``SGDINFER_PURE_PYTHON=1`` (or calling
:func:`set_backend`) forces the pure-Python fallback. Both backends
consume identical pre-generated data, so results agree to floating-point
roundoff and each backend is individually deterministic.
"""

from __future__ import annotations

import os

from . import _py_core

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BACKENDS = {"python": _py_core}
if _core is not None:
    _BACKENDS["cython"] = _core

if os.environ.get("SGDINFER_PURE_PYTHON"):
    _active_name = "python"
else:
    _active_name = "cython" if _core is not None else "python"


def available_backends():
    return tuple(sorted(_BACKENDS))


def backend_name() -> str:
    return _active_name


def set_backend(name: str):
    """Select the kernel backend for subsequent trajectory runs."""
    global _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active_name = name


def active():
    return _BACKENDS[_active_name]


def get(name: str):
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    return _BACKENDS[name]
