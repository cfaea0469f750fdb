"""Import-time selection of the solver kernel backend.

The compiled extension ``ppglm._kernels`` is preferred; the pure-NumPy
module ``ppglm._kernels_py`` is the fallback and the reference
implementation.  Set the environment variable ``PPGLM_PURE_PYTHON=1``
to force the fallback (useful for debugging and benchmarking).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("PPGLM_PURE_PYTHON"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND = kernels.BACKEND_NAME


def available_backends():
    """Importable kernel backends, keyed by name."""
    out = {_kernels_py.BACKEND_NAME: _kernels_py}
    try:
        from . import _kernels
        out[_kernels.BACKEND_NAME] = _kernels
    except ImportError:
        pass
    return out
