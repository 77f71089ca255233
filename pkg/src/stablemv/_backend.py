"""Select the kernel backend at import time.

The compiled ``_core`` extension is preferred.  Setting the environment
variable ``STABLEMV_BACKEND=python`` forces the NumPy fallback, which is also
used automatically when the extension was not built.
"""

import os

from . import _core_py

if os.environ.get("STABLEMV_BACKEND", "").lower() == "python":
    core = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as core
        BACKEND = "cython"
    except ImportError:
        core = _core_py
        BACKEND = "python"

__all__ = ["core", "BACKEND"]
