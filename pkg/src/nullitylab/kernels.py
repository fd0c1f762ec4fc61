"""Hot inner loops, dispatched to the compiled extension when available.

Set ``NULLITYLAB_PURE_PYTHON=1`` to force the NumPy fallback and
``NULLITYLAB_THREADS`` to cap the OpenMP threads of the compiled path.
"""

import os

from . import _pykernels

if os.environ.get("NULLITYLAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def num_threads() -> int:
    raw = os.environ.get("NULLITYLAB_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return os.cpu_count() or 1


def pair_max_distance(A, B, symmetric=False, backend=None):
    impl = _select(backend)
    return impl.pair_max_distance(_c(A), _c(B), symmetric, num_threads())


def flatness_residuals(forms, backend=None):
    return _select(backend).flatness_residuals(_c(forms), num_threads())


def strain_maxabs(jac, backend=None):
    return _select(backend).strain_maxabs(_c(jac), num_threads())


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {backend!r}")


def _c(a):
    import numpy as np
    return np.ascontiguousarray(a, dtype=float)
