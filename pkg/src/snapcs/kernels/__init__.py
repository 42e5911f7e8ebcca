"""Hot-loop kernels with a compiled core and a pure-numpy fallback.

The compiled extension is picked at import when present; set the
environment variable ``SNAPCS_PURE_PYTHON=1`` to force the fallback.
Both backends implement the same functions with identical accumulation
order, so results are bit-for-bit equal either way.
"""

import os

from . import _fallback

if os.environ.get("SNAPCS_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _fallback
    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl
        BACKEND = "native"
    except ImportError:
        _impl = _fallback
        BACKEND = "fallback"

encode_frames = _impl.encode_frames
extract_windows = _impl.extract_windows
accumulate_windows = _impl.accumulate_windows
gather_blocks = _impl.gather_blocks


def backend():
    """Name of the active backend: 'native' or 'fallback'."""
    return BACKEND
