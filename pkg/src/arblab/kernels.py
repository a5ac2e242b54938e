"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``ARBLAB_BACKEND=python``
to force the numpy fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels

if os.environ.get("ARBLAB_BACKEND", "").lower() == "python":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

loss_grad = _impl.loss_grad
class_parts = _impl.class_parts

LOG_SPACE_RATIO = _pykernels.LOG_SPACE_RATIO
DENOM_FLOOR = _pykernels.DENOM_FLOOR
