"""Backend dispatch for the hot loops.

The numba backend is used when numba imports cleanly, unless the
environment variable ``NETPANEL_BACKEND=numpy`` (or ``NUMBA_DISABLE_JIT=1``)
selects the pure-numpy path. Both backends consume the same pre-drawn random
numbers, so a fixed seed gives the same chain either way.
"""
import os

from . import vec

try:
    if os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        raise ImportError("jit disabled")
    from . import jit
except ImportError:  # pragma: no cover - numba missing or disabled
    jit = None

BACKENDS = ("numba", "numpy")


def available() -> tuple:
    return BACKENDS if jit is not None else ("numpy",)


def default_backend() -> str:
    name = os.environ.get("NETPANEL_BACKEND", "").strip().lower()
    if name in ("numpy", "np", "python"):
        return "numpy"
    if name and name != "numba":
        raise ValueError(f"NETPANEL_BACKEND must be 'numba' or 'numpy', got {name!r}")
    return "numba" if jit is not None else "numpy"


def get(name: str | None = None):
    """Kernel module for ``name`` (defaults to :func:`default_backend`)."""
    name = name or default_backend()
    if name == "numpy":
        return vec
    if name == "numba":
        if jit is None:
            raise RuntimeError("numba backend requested but numba is unavailable")
        return jit
    raise ValueError(f"unknown backend {name!r}")
