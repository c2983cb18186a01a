"""Backend selection for the propagation kernel.

The compiled extension is used when it was built; setting
``ADIASWITCH_PURE_PYTHON=1`` forces the NumPy fallback.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("ADIASWITCH_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends():
    return ("compiled", "python") if _compiled is not None else ("python",)


def get_kernel(backend=None):
    """Return the ``rk4_propagate`` implementation for ``backend``."""
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available; rebuild the extension")
        return _compiled.rk4_propagate
    if backend == "python":
        return _kernels_py.rk4_propagate
    raise ValueError(f"unknown backend {backend!r}")
