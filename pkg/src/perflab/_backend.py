"""Selects the compiled kernels when importable, else the numpy fallback.

Set ``PERFLAB_BACKEND=python`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def kernels(name: str | None = None) -> ModuleType:
    """Kernel module by name (``"compiled"`` or ``"python"``); default is the active one."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["python"] + (["compiled"] if _compiled is not None else [])


if os.environ.get("PERFLAB_BACKEND", "").strip().lower() == "python" or _compiled is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

K = kernels(BACKEND)
