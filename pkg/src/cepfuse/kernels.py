"""Select the kernel backend at import time.

The compiled extension is preferred; set ``CEPFUSE_PURE_PYTHON=1`` to force
the pure-Python fallback.
"""

from __future__ import annotations

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("CEPFUSE_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if backend is compiled_backend else "python"

haversine_km = backend.haversine_km
scan = backend.scan

__all__ = ["BACKEND", "backend", "compiled_backend", "haversine_km", "python_backend", "scan"]
