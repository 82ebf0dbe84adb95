"""Kernel backend selection.

The compiled extension is used when importable; set ``HSS_SIM_PURE_PYTHON=1``
to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _pykernels as python_kernels

try:
    from . import _ckernels as compiled_kernels
except ImportError:  # extension not built
    compiled_kernels = None

if compiled_kernels is not None and not os.environ.get("HSS_SIM_PURE_PYTHON"):
    kernels = compiled_kernels
else:
    kernels = python_kernels

BACKEND = kernels.BACKEND


def available_backends():
    out = {"python": python_kernels}
    if compiled_kernels is not None:
        out["cython"] = compiled_kernels
    return out
