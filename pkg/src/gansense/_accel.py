"""Kernel compilation switch.

Every hot kernel in the package is written in the subset of numpy that numba
can compile, so one source serves two backends:

* ``GANSENSE_JIT=1`` (default): kernels are compiled with ``numba.njit``.
* ``GANSENSE_JIT=0``: kernels run as plain numpy/Python.

The flag is read once, at import time. If numba is not importable the numpy
path is used regardless of the flag.
"""

from __future__ import annotations

import os

ENV_FLAG = "GANSENSE_JIT"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_enabled(value: str | None) -> bool:
    if value is None:
        return True
    return value.strip().lower() not in {"0", "false", "no", "off", "numpy"}


JIT_ENABLED = HAVE_NUMBA and _flag_enabled(os.environ.get(ENV_FLAG))
BACKEND = "numba" if JIT_ENABLED else "numpy"


def kernel(fn):
    """Compile ``fn`` with numba when the JIT backend is active."""
    if JIT_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


def python_impl(fn):
    """Return the uncompiled function behind a (possibly) compiled kernel."""
    return getattr(fn, "py_func", fn)
