"""Hot-kernel backend selection.

The compiled extension is used when present; otherwise the numpy reference
implementations take over. Set ``NEUROSEM_PURE_PYTHON=1`` to force the
fallback (the benchmark and parity tests use this to compare backends).
"""

import os

from . import pyref

if os.environ.get("NEUROSEM_PURE_PYTHON"):
    _impl = pyref
else:
    try:
        from . import _fast as _impl
    except ImportError:
        _impl = pyref

BACKEND = _impl.BACKEND
adam_update = _impl.adam_update
calibrate_bandwidths = _impl.calibrate_bandwidths
studentt_forces = _impl.studentt_forces
idw_grid = _impl.idw_grid

__all__ = ["BACKEND", "adam_update", "calibrate_bandwidths",
           "studentt_forces", "idw_grid", "pyref"]
