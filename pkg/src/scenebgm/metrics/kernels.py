"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``SCENEBGM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from scenebgm.metrics import _pykernels

if os.environ.get("SCENEBGM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from scenebgm.metrics import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

IMPLEMENTATION = _impl.IMPLEMENTATION
lcs_length = _impl.lcs_length
align_chunks = _impl.align_chunks
count_chunks = _pykernels.count_chunks
