"""Kernel backend selection.

The compiled extension (``_ckern``) is preferred when importable; the numpy
implementation in :mod:`gapaudit.kernels.py` is the fallback.  Set
``GAPAUDIT_BACKEND=py`` or ``GAPAUDIT_BACKEND=ext`` to force a choice
(forcing ``ext`` raises if the extension is missing).
"""

import os

from . import py as _py_backend
from ..errors import InvalidConfig

try:
    from . import _ckern as _ext_backend
except ImportError:
    _ext_backend = None

_FORCED = os.environ.get("GAPAUDIT_BACKEND", "").strip().lower()
if _FORCED == "py":
    _active = _py_backend
elif _FORCED == "ext":
    if _ext_backend is None:
        raise InvalidConfig("GAPAUDIT_BACKEND=ext but the compiled extension is not available")
    _active = _ext_backend
elif _FORCED == "":
    _active = _ext_backend if _ext_backend is not None else _py_backend
else:
    raise InvalidConfig(f"unknown GAPAUDIT_BACKEND {_FORCED!r} (expected 'py' or 'ext')")


def active_backend():
    """Name of the backend in use: 'ext' or 'py'."""
    return "ext" if _active is _ext_backend else "py"


def available_backends():
    names = ["py"]
    if _ext_backend is not None:
        names.insert(0, "ext")
    return names


def get_backend(name=None):
    """Return the kernel namespace for ``name`` (default: the active one)."""
    if name is None:
        return _active
    if name == "py":
        return _py_backend
    if name == "ext":
        if _ext_backend is None:
            raise InvalidConfig("compiled kernel backend is not available")
        return _ext_backend
    raise InvalidConfig(f"unknown kernel backend {name!r}")


accumulate_block = _active.accumulate_block
accumulate_pairs = _active.accumulate_pairs
iou_scan = _active.iou_scan
popcount_rows = _active.popcount_rows
