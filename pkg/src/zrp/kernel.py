"""Selects the event kernel at import time.

The compiled ``_ckernel`` is used when importable; setting the environment
variable ``ZRP_PURE_PYTHON=1`` forces the pure-Python fallback. Both
implementations produce bit-identical results.
"""

import os

from . import _pykernel

BACKEND = "python"
_impl = _pykernel

if os.environ.get("ZRP_PURE_PYTHON") != "1":
    try:
        from . import _ckernel
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        _impl = _ckernel

RIGHT_ABSORB = _pykernel.RIGHT_ABSORB
RIGHT_CLOSED = _pykernel.RIGHT_CLOSED
RIGHT_RING = _pykernel.RIGHT_RING


def implementation(name: str | None = None):
    """Return the kernel module named ``"cython"`` or ``"python"`` (default: active)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernel
    if name == "cython":
        from . import _ckernel
        return _ckernel
    raise ValueError(f"unknown kernel backend {name!r}")


def run(*args, backend: str | None = None):
    return implementation(backend).run(*args)
