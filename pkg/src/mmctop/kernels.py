"""Backend selection for the TDF kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``MMCTOP_PURE_PYTHON=1`` to force the fallback.
Both backends evaluate each node independently, so results do not depend on
any thread count.
"""
import os

from . import _kernels_py

BACKEND = "python"
tdf3d = _kernels_py.tdf3d
tdf2d = _kernels_py.tdf2d

if os.environ.get("MMCTOP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        BACKEND = "cython"
        tdf3d = _compiled.tdf3d
        tdf2d = _compiled.tdf2d

__all__ = ["BACKEND", "tdf3d", "tdf2d"]
