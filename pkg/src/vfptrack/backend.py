"""Kernel backend selection.

Hot inner loops (3x3 convolution, DFT/FFT combine steps) have two
implementations: numba @njit loops and vectorized numpy. The active one is
picked once at import time from the VFPT_BACKEND environment variable:

    VFPT_BACKEND=numba   use numba if importable, else fall back (default)
    VFPT_BACKEND=numpy   force the pure-numpy path

`benchmarks/bench_kernels.py` times both paths head to head.
"""

import os

_requested = os.environ.get("VFPT_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"VFPT_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

HAVE_NUMBA = False
if _requested == "numba":
    try:
        import numba  # noqa: F401

        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
