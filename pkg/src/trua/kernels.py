"""Backend selection for the hot kernels.

The compiled extension is used when importable; otherwise the pure-Python
twin is loaded.  Set ``TRUA_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os

_MASK = 0xFFFFFFFFFFFFFFFF

if os.environ.get("TRUA_PURE_PYTHON"):
    from trua import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from trua import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from trua import _pykernels as _impl

        BACKEND = "python"

RCTree = _impl.RCTree
failure_trials = _impl.failure_trials
splitmix64 = _impl.splitmix64


def derive_seed(seed: int, *keys: int) -> int:
    """Derive an independent 64-bit stream seed from ``seed`` and integer keys."""
    state = int(seed) & _MASK
    _, out = splitmix64(state)
    for key in keys:
        state = (out ^ ((int(key) + 1) * 0x9E3779B97F4A7C15)) & _MASK
        _, out = splitmix64(state)
    return out
