"""Backend selection for the per-step kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback.  Set ``SPARSESTREAM_BACKEND=python`` to force the fallback.
"""

import os
import warnings

from . import _kernels_py

_requested = os.environ.get("SPARSESTREAM_BACKEND", "").strip().lower()

compiled = None
try:
    from . import _ckernels as compiled
except ImportError as exc:  # pragma: no cover - depends on the build
    if _requested == "cython":
        raise
    if _requested != "python":
        warnings.warn(f"sparsestream: compiled kernels unavailable ({exc}); using numpy fallback")

if compiled is not None and _requested != "python":
    impl = compiled
else:
    impl = _kernels_py

BACKEND = impl.NAME
dot = impl.dot
dual_update = impl.dual_update
sparsify = impl.sparsify
axpy = impl.axpy
lasso_cd_sweep = impl.lasso_cd_sweep


def available_backends():
    """Mapping of backend name to kernel module, compiled first when present."""
    out = {}
    if compiled is not None:
        out[compiled.NAME] = compiled
    out[_kernels_py.NAME] = _kernels_py
    return out
