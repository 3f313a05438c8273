"""Select the kernel implementation at import time.

The compiled extension is preferred; ``COARSE2FINE_PURE_PYTHON=1`` forces
the numpy fallback (useful for debugging and for the backend benchmark).
"""
import os

from . import _kernels_py

kernels = _kernels_py
name = "python"

if not os.environ.get("COARSE2FINE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        name = "cython"


def available():
    """Names of the importable backends, fastest first."""
    found = []
    try:
        from . import _kernels  # noqa: F401
        found.append("cython")
    except ImportError:
        pass
    found.append("python")
    return found


def get(backend_name):
    if backend_name == "python":
        return _kernels_py
    if backend_name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend_name!r}")
