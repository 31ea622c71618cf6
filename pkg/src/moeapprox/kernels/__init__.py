"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; set ``MOEAPPROX_PURE_PYTHON=1``
to force the fallback.
"""
import os

import numpy as np

from . import _fallback as fallback

compiled = None
if os.environ.get("MOEAPPROX_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as compiled
    except ImportError:  # extension not built
        compiled = None

BACKEND = "cython" if compiled is not None else "python"
_impl = compiled if compiled is not None else fallback


def contract(G, E, workers=1):
    """Return ``G @ E.T`` computed with a worker-independent summation order."""
    G = np.ascontiguousarray(G, dtype=np.float64)
    E = np.ascontiguousarray(E, dtype=np.float64)
    return _impl.contract(G, E, int(workers))


def softmax_rows(Z, workers=1):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise ValueError("expected a 2-D array of logits")
    return _impl.softmax_rows(Z, int(workers))


__all__ = ["BACKEND", "compiled", "contract", "fallback", "softmax_rows"]
