"""Numba detection and the kernel backend switch.

Hot kernels live in ``nodedp._kernels`` in two variants: a loop-style
implementation compiled with ``numba.njit`` and a pure-numpy fallback.
Selection happens once at import time:

* if numba is importable and the environment variable ``NODEDP_NO_NUMBA``
  is unset (or "0"), the compiled variant is used;
* otherwise the numpy fallback is used.

``NODEDP_NO_NUMBA=1 pytest`` runs the whole suite on the fallback path.
"""

from __future__ import annotations

import os

try:
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only where numba is absent
    HAS_NUMBA = False

    def _njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


_FLAG = os.environ.get("NODEDP_NO_NUMBA", "").strip().lower()
NUMBA_ENABLED = HAS_NUMBA and _FLAG not in ("1", "true", "yes")

njit = _njit


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
