"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set EXIGEO_PURE_PYTHON=1 to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("EXIGEO_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

mesh_ball_areas = _impl.mesh_ball_areas
polyline_energy = _impl.polyline_energy
