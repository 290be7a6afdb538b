"""Kernel backend selection.

The compiled extension is used when it imports; otherwise, or when
``FEDSIM_PURE_PYTHON`` is set, the pure-Python reference is used.
"""
import os

from . import _pykernels

if os.environ.get("FEDSIM_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

path_totals = _impl.path_totals
greedy_outsource = _impl.greedy_outsource


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
