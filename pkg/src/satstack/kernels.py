"""Kernel dispatch: compiled extension when built, numpy fallback otherwise.

Set SATSTACK_PURE=1 to force the fallback (useful for benchmarking and for
environments without a compiler).
"""

import os

from satstack import _kernels_py

if os.environ.get("SATSTACK_PURE"):
    _impl = _kernels_py
    USING_EXTENSION = False
else:
    try:
        from satstack import _kernels as _impl  # type: ignore[no-redef]

        USING_EXTENSION = True
    except ImportError:
        _impl = _kernels_py
        USING_EXTENSION = False

tps_kernel_matrix = _impl.tps_kernel_matrix
idw_predict = _impl.idw_predict
label_components = _impl.label_components
