"""Kernel backend selection.

The compiled extension (`lvqkit._ckernels`) is preferred when importable;
the numpy fallback (`lvqkit._pykernels`) is always available. Override
with the ``LVQKIT_BACKEND`` environment variable or an explicit
``backend=`` argument ("auto", "compiled", "python").
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels

    HAVE_COMPILED = True
except ImportError:
    _ckernels = None
    HAVE_COMPILED = False


def available() -> list[str]:
    names = ["python"]
    if HAVE_COMPILED:
        names.insert(0, "compiled")
    return names


def get(name: str | None = None):
    """Resolve a backend module by name; None/'auto' prefers compiled."""
    if name is None:
        name = os.environ.get("LVQKIT_BACKEND", "auto")
    if name in ("auto", ""):
        return _ckernels if HAVE_COMPILED else _pykernels
    if name == "python":
        return _pykernels
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError(
                "compiled backend requested but lvqkit._ckernels is not built; "
                "reinstall with a C compiler or use backend='python'"
            )
        return _ckernels
    raise ValueError(f"unknown backend {name!r}; expected auto, compiled, or python")
