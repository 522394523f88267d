"""Kernel backend selection.

The elementwise Taylor/tanh kernels exist twice: a fused Cython extension
(`dgpinn._kernels`) and a pure-numpy fallback (`dgpinn.kernels_py`).  The
compiled one is used when it imports cleanly; set DGPINN_BACKEND=python or
DGPINN_BACKEND=compiled to force a choice.  `benchmarks/backend_bench.py`
compares the two.

Large temporary arrays churn through glibc's mmap threshold, which costs
page faults every training iteration; we raise the threshold once here.
"""

from __future__ import annotations

import ctypes
import ctypes.util
import os
import sys


def _tune_malloc():
    if not sys.platform.startswith("linux"):
        return
    try:
        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except OSError:
        pass


_tune_malloc()

from . import kernels_py  # noqa: E402

_requested = os.environ.get("DGPINN_BACKEND", "").lower()

if _requested in ("", "compiled"):
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        kernels = kernels_py
elif _requested == "python":
    kernels = kernels_py
else:
    raise RuntimeError(f"unknown DGPINN_BACKEND value: {_requested!r}")


def backend_name() -> str:
    return kernels.name
