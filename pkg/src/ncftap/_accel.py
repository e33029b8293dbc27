"""Optional numba acceleration.

Set ``NCFTAP_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. for
debugging or on platforms where numba is unavailable.
"""
from __future__ import annotations

import os

_DISABLED = os.environ.get("NCFTAP_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:  # pragma: no cover - exercised implicitly
    if _DISABLED:
        raise ImportError
    import numba as _nb
except ImportError:  # pragma: no cover
    _nb = None

HAVE_NUMBA = _nb is not None

njit_kwargs = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
}


def njit(func):
    """``numba.njit`` with the package defaults, or ``None`` when disabled."""
    if _nb is None:
        return None
    return _nb.njit(**njit_kwargs)(func)


def use_numba(flag: bool | None = None) -> bool:
    """Resolve a per-call backend request against availability."""
    if flag is None:
        return HAVE_NUMBA
    return bool(flag) and HAVE_NUMBA
