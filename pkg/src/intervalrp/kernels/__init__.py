"""Hot numerical kernels.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy implementations in ``_pykernels`` are used. Setting the environment
variable ``INTERVALRP_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("INTERVALRP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

trajectory_distances = _impl.trajectory_distances
smooth_rp_slope = _impl.smooth_rp_slope
series_grad = _impl.series_grad
conv2d_valid = _impl.conv2d_valid
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward

__all__ = [
    "BACKEND",
    "trajectory_distances",
    "smooth_rp_slope",
    "series_grad",
    "conv2d_valid",
    "conv2d_backward",
    "maxpool_forward",
    "maxpool_backward",
]
