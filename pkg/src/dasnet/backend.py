"""Kernel backend selection.

Two implementations of the hot inner loops exist: a numba @njit version
and a pure-numpy fallback.  The active one is chosen once per process
from the DASNET_BACKEND environment variable ("numba" or "numpy");
unset, numba is used when importable.
"""

import os

_ENV_VAR = "DASNET_BACKEND"
_selected: str | None = None


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def active_backend() -> str:
    """Return the backend name in effect: "numba" or "numpy"."""
    global _selected
    if _selected is None:
        choice = os.environ.get(_ENV_VAR, "").strip().lower()
        if choice in ("numba", "numpy"):
            _selected = choice
        elif choice:
            raise ValueError(
                f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}"
            )
        else:
            _selected = "numba" if numba_available() else "numpy"
    return _selected
