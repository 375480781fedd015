"""Backend selection for the hot kernels.

Numba is used when importable unless ``LOOPQRNG_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel falls back to its numpy (or plain
Python) twin. Both paths are always importable so they can be compared.
"""
import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = _noop_jit
    HAVE_NUMBA = False

_DISABLED = os.environ.get("LOOPQRNG_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

USE_NUMBA = HAVE_NUMBA and not _DISABLED


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
