"""Rasterization kernel backend selection.

The compiled Cython extension is preferred when importable; the pure-numpy
fallback implements identical semantics. Set MOTIONGS_BACKEND=numpy (or
cython) to force a choice.
"""

import os

from . import numpy_backend

_choice = os.environ.get("MOTIONGS_BACKEND", "auto")

if _choice in ("auto", "cython"):
    try:
        from . import _rasterize as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = numpy_backend
else:
    _impl = numpy_backend

forward = _impl.forward
backward = _impl.backward
BACKEND_NAME = _impl.BACKEND_NAME


def available_backends():
    """Backend names importable in this environment, preferred first."""
    names = []
    try:
        from . import _rasterize  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    names.append("numpy")
    return names


def get_backend(name=None):
    """Explicit backend lookup, for tests and benchmarks; None = default."""
    if name is None:
        return _impl
    if name == "numpy":
        return numpy_backend
    if name == "cython":
        from . import _rasterize
        return _rasterize
    raise ValueError(f"unknown backend '{name}'")
