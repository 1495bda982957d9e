"""Hot numeric kernels with a compiled core and a pure-python fallback.

The compiled extension is preferred when it imported successfully; set
``SHEAFTRACK_FORCE_FALLBACK=1`` to insist on the numpy implementation
(used by the benchmark and the cross-implementation tests).
"""

import os

if os.environ.get("SHEAFTRACK_FORCE_FALLBACK"):
    from . import fallback as _impl

    HAVE_NATIVE = False
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        HAVE_NATIVE = True
    except ImportError:
        from . import fallback as _impl

        HAVE_NATIVE = False

field_velocity_batch = _impl.field_velocity_batch
IMPLEMENTATION = "native" if HAVE_NATIVE else "fallback"

__all__ = ["field_velocity_batch", "HAVE_NATIVE", "IMPLEMENTATION"]
