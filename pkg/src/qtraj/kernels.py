"""Backend selection for the hot loops.

The compiled extension ``qtraj._kernels`` is used when it was built; the
numpy implementation in ``qtraj._kernels_py`` is the fallback. Setting the
environment variable ``QTRAJ_BACKEND=python`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Kernel module by name; ``None`` means the default for this process."""
    if name is None:
        name = os.environ.get("QTRAJ_BACKEND", "").strip().lower() or None
    if name is None:
        return _compiled if _compiled is not None else _kernels_py
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown or unavailable kernel backend {name!r}; have {available_backends()}"
        ) from None


default = get_backend()
NAME = default.NAME
