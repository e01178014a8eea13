"""Select the compiled kernels when importable, else the numpy fallback.

Set ``MAMPC_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py as python_kernels

if os.environ.get("MAMPC_PURE_PYTHON", "") not in ("", "0"):
    kernels = python_kernels
    compiled_kernels = None
else:
    try:
        from . import _kernels as compiled_kernels
    except ImportError:  # extension not built
        compiled_kernels = None
    kernels = compiled_kernels if compiled_kernels is not None else python_kernels

BACKEND = "compiled" if kernels is not python_kernels else "python"
