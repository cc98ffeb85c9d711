"""Numba switch.

Kernels are compiled with numba when it is importable and the environment
variable ``PHASEFLOW_DISABLE_NUMBA`` is unset (or ``0``). Otherwise every
kernel dispatches to its pure-numpy twin in :mod:`phaseflow.kernels`.
"""

import os

_FLAG = os.environ.get("PHASEFLOW_DISABLE_NUMBA", "0").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED

JIT_OPTIONS = {"cache": True, "nogil": True}
