"""Backend switch for the hot kernels.

Set ``ORDPOOL_NUMBA=0`` before import to force the pure-numpy path.
"""

import os

NUMBA_REQUESTED = os.environ.get("ORDPOOL_NUMBA", "1").strip().lower() not in (
    "0", "false", "no", "off")

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA
BACKEND = "numba" if USE_NUMBA else "numpy"
