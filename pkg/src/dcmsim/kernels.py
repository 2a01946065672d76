"""Backend selection for the trajectory/window kernel.

The compiled extension is used when it imports; set ``DCMSIM_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

_compiled = None
if not os.environ.get("DCMSIM_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKENDS = ("cython", "python")
DEFAULT_BACKEND = "cython" if _compiled is not None else "python"


def available_backends():
    return [b for b in BACKENDS if b == "python" or _compiled is not None]


def get_run_windows(backend=None):
    backend = backend or DEFAULT_BACKEND
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled kernel not available; build with `pip install -e .`")
        return _compiled.run_windows
    if backend == "python":
        return _kernels_py.run_windows
    raise ValueError(f"unknown backend {backend!r}")
