"""Optional numba acceleration.

Hot kernels (assignment solver, transport simplex, pairwise distances, CRC)
are written as plain Python functions over numpy arrays and decorated with
:func:`maybe_jit`.  When numba is importable and the ``KVMARGIN_NUMBA``
environment variable is not set to ``0``/``off``/``false``, the decorator
compiles them with ``@njit``; otherwise the pure-Python body runs as a
fallback.  Both paths execute the same statements, so results are identical
up to floating-point ulps, and the fallback keeps the package usable where
numba is unavailable.

The flag is read once at import time: flipping it requires a fresh
interpreter (``benchmarks/bench_transport.py`` spawns subprocesses for the
comparison).
"""

import os

_ENV_FLAG = "KVMARGIN_NUMBA"
_OFF_VALUES = {"0", "off", "false", "no"}


def _detect() -> bool:
    """Decide at import time whether kernels get compiled."""
    if os.environ.get(_ENV_FLAG, "1").strip().lower() in _OFF_VALUES:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


NUMBA_ENABLED = _detect()


def maybe_jit(func):
    """Apply ``numba.njit(cache=True, nogil=True)`` when acceleration is on.

    No ``fastmath``: reassociation would make results depend on the numba
    version, and determinism across runs is part of the solver contract.
    """
    if NUMBA_ENABLED:
        from numba import njit

        return njit(cache=True, nogil=True)(func)
    return func
