"""Kernel backend selection.

Set ``LTCACHE_BACKEND=numpy`` before import to force the interpreter
fallback; the default is ``numba`` when it can be imported.
"""

import logging
import os

logger = logging.getLogger(__name__)

_requested = os.environ.get("LTCACHE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"LTCACHE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _kernels_numba as kernels
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        logger.warning("numba unavailable, falling back to the numpy kernels")
        from . import _kernels_numpy as kernels
        BACKEND = "numpy"
else:
    from . import _kernels_numpy as kernels
    BACKEND = "numpy"


__all__ = ["BACKEND", "kernels"]
