"""Hot inner loops with a compiled backend and a pure-Python fallback.

The compiled extension is preferred. Set ``RADAR_SOMNIA_PURE=1`` to force
the fallback; both expose ``dtw``, ``lstm_forward`` and ``lstm_backward``.
"""

import os

from . import _pyimpl

try:
    from . import _ext as _compiled
except ImportError:  # extension not built
    _compiled = None

_force_pure = os.environ.get("RADAR_SOMNIA_PURE", "").lower() in ("1", "true", "yes")
_impl = _compiled if (_compiled is not None and not _force_pure) else _pyimpl

BACKEND = _impl.BACKEND
dtw = _impl.dtw
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def available_backends():
    """Names mapped to importable backend modules."""
    out = {"python": _pyimpl}
    if _compiled is not None:
        out["cython"] = _compiled
    return out
