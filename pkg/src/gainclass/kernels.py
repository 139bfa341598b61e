"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when importable; otherwise the
numpy implementations in ``_pykernels`` are used. Setting the environment
variable ``GAINCLASS_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

if os.environ.get("GAINCLASS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

exhaustive_search = _impl.exhaustive_search
fixed_point = _impl.fixed_point
best_flip = _impl.best_flip

FIXED = _pykernels.FIXED
MAX_ITERS = _pykernels.MAX_ITERS
COLLAPSE = _pykernels.COLLAPSE
STALLED = _pykernels.STALLED
interval_scan = _impl.interval_scan
