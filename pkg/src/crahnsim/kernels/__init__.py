"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imported cleanly; otherwise the numpy
implementation is selected. Callers go through the module attributes
(``kernels.sense_busy(...)``) so :func:`use_backend` takes effect everywhere.
"""

from __future__ import annotations

import logging

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_EXPORTS = ("train_full_batch", "batch_mse", "sense_busy", "adjacency", "window_features")
BACKEND = ""


def available_backends() -> list[str]:
    return ["cython", "python"] if _ckernels is not None else ["python"]


def get_backend(name: str):
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> str:
    """Switch every kernel to backend ``name``; returns the previous backend."""
    global BACKEND
    mod = get_backend(name)
    previous = BACKEND
    for attr in _EXPORTS:
        globals()[attr] = getattr(mod, attr)
    BACKEND = mod.NAME
    log.debug("kernel backend: %s", BACKEND)
    return previous


use_backend("cython" if _ckernels is not None else "python")
