"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise the
pure-Python reference implementation. Set ``INTENTMERGE_PURE_PYTHON=1`` to
force the fallback.
"""
import os

from intentmerge import _kernels_py

if os.environ.get("INTENTMERGE_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from intentmerge import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

idm_accel = _impl.idm_accel
speed_command = _impl.speed_command
steering_command = _impl.steering_command
bicycle_step = _impl.bicycle_step
boxes_overlap = _impl.boxes_overlap
locate = _impl.locate
simulate_ticks = _impl.simulate_ticks
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "idm_accel",
    "speed_command",
    "steering_command",
    "bicycle_step",
    "boxes_overlap",
    "locate",
    "simulate_ticks",
    "adam_update",
]
