"""Kernel backend selection: compiled extension if built, numpy otherwise."""

from __future__ import annotations

from . import _ref

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_active = _compiled if _compiled is not None else _ref

BACKEND = "compiled" if _compiled is not None else "numpy"


def active():
    """The module providing the edge kernels currently in use."""
    return _active


def available_backends():
    names = ["numpy"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def set_backend(name):
    """Force a backend ("compiled" | "numpy"); used by tests and benchmarks."""
    global _active, BACKEND
    if name == "numpy":
        _active = _ref
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel core is not built")
        _active = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
