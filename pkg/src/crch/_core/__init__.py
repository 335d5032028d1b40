"""Hot kernels with a compiled (Cython) implementation and a pure-Python fallback.

The compiled module is used when it was built and ``CRCH_PURE_PYTHON`` is not
set to ``1``. ``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _ckernels is not None and os.environ.get("CRCH_PURE_PYTHON", "") != "1":
    _impl = _ckernels
    BACKEND = "cython"
else:
    _impl = _pykernels
    BACKEND = "python"

best_triplet_pair = _impl.best_triplet_pair
merge_rows = _impl.merge_rows
earliest_start = _impl.earliest_start
mean_cross_distance = _impl.mean_cross_distance

__all__ = [
    "BACKEND", "BACKENDS", "best_triplet_pair", "merge_rows", "earliest_start",
    "mean_cross_distance",
]
