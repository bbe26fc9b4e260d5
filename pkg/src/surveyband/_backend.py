"""Pick the kernel implementation at import time.

The compiled extension is preferred. Set ``SURVEYBAND_PURE=1`` to force the
pure-Python fallback (used by the parity tests and the benchmark).
"""
import os

if os.environ.get("SURVEYBAND_PURE", "") not in ("", "0"):
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # extension not built
        from . import _pykernels as kernels

BACKEND = kernels.BACKEND

__all__ = ["kernels", "BACKEND"]
