"""Backend selection for the grouped alignment kernel.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback. ``CAFE_BACKEND=python`` forces the fallback at import time.
"""

import os

from . import _kernels_py

try:
    if os.environ.get("CAFE_BACKEND", "auto").lower() == "python":
        raise ImportError("compiled backend disabled by CAFE_BACKEND")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_BACKENDS = {"python": _kernels_py.grouped_alignment}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled.grouped_alignment

DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"

OK = _kernels_py.OK
TARGET_DEGENERATE = _kernels_py.TARGET_DEGENERATE
SOURCE_DEGENERATE = _kernels_py.SOURCE_DEGENERATE
PIVOT_RTOL = _kernels_py.PIVOT_RTOL


def available_backends():
    return sorted(_BACKENDS)


def get_kernel(backend=None):
    name = backend or DEFAULT_BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}") from None
