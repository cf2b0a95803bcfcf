"""numba switch.

Set ``ALOHAJAM_DISABLE_JIT=1`` to force the pure numpy/Python kernels even when
numba is importable. Both paths consume identical random streams, so results
agree bit for bit.
"""

import logging
import os

_flag = os.environ.get("ALOHAJAM_DISABLE_JIT", "").strip().lower()
DISABLE_JIT = _flag not in ("", "0", "false", "no")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLE_JIT


def njit(func):
    if numba is None:
        return func
    return numba.njit(cache=True, nogil=True)(func)
