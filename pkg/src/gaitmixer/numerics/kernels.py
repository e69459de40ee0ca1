"""Kernel backend selection.

The compiled extension is used when it imports; otherwise (or when
``GAITMIXER_PURE_PYTHON=1``) the numpy implementation takes over.
"""
import os

from . import _dwconv_py

BACKEND = "python"
if os.environ.get("GAITMIXER_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _dwconv as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _dwconv_py
else:
    _impl = _dwconv_py

dwconv_forward = _impl.dwconv_forward
dwconv_backward = _impl.dwconv_backward
gelu_forward = _impl.gelu_forward
python_kernels = _dwconv_py
