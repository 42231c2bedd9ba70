"""Kernel backend selection.

The hot inner loops (dense convolution and deformable sampling) exist twice:
as numba-jitted loop kernels and as a pure-numpy vectorized fallback. The
``DNLN_BACKEND`` environment variable selects one ("numba" or "numpy");
left unset, numba is used whenever it imports.
"""

import os

_requested = os.environ.get("DNLN_BACKEND", "auto").strip().lower() or "auto"
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"DNLN_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

if _requested == "numba" and not HAVE_NUMBA:
    raise ImportError("DNLN_BACKEND=numba requested but numba is not installed")

USE_NUMBA = _requested == "numba" or (_requested == "auto" and HAVE_NUMBA)
BACKEND = "numba" if USE_NUMBA else "numpy"
