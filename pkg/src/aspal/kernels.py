"""Backend selection for the projection kernels.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``ASPAL_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used.
"""

import os

from . import _pykernels

if os.environ.get("ASPAL_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

project_simplex = _impl.project_simplex
project_capped_simplex = _impl.project_capped_simplex
soft_threshold = _impl.soft_threshold
