"""Backend selection for the Riccati hot loop.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``SELFTUNE_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _riccati_py

if os.environ.get("SELFTUNE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _riccati_py
else:
    try:
        from . import _riccati_ext as _impl
    except ImportError:  # extension not built
        _impl = _riccati_py

BACKEND = "compiled" if _impl is not _riccati_py else "python"

CONVERGED = _riccati_py.CONVERGED
DIVERGED = _riccati_py.DIVERGED
MAX_ITER = _riccati_py.MAX_ITER
KERNEL_ERRORS = tuple({_riccati_py.KernelError, _impl.KernelError})

riccati_step = _impl.riccati_step
dare_iterate = _impl.dare_iterate


def available_backends():
    """Map backend name to kernel module for every backend that imports."""
    out = {"python": _riccati_py}
    try:
        from . import _riccati_ext
    except ImportError:
        pass
    else:
        out["compiled"] = _riccati_ext
    return out
