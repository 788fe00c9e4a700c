"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``DRACSIM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _fallback

BACKEND = "python"

if os.environ.get("DRACSIM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

modal_series = _impl.modal_series
dd_ensemble = _impl.dd_ensemble

__all__ = ["BACKEND", "modal_series", "dd_ensemble"]
