"""Hot convolution kernels with backend selection at import.

The compiled Cython core is preferred; the numpy im2col fallback is used when
the extension was not built. Set SELD6DOF_KERNELS=numpy or =cython to force a
backend (forcing cython raises if the extension is missing).
"""

import os

_forced = os.environ.get("SELD6DOF_KERNELS", "").strip().lower()

if _forced in ("numpy", "python", "fallback"):
    from . import _numpy as _impl
elif _forced == "cython":
    from . import _core as _impl  # noqa: F401  (ImportError is the intended failure)
else:
    try:
        from . import _core as _impl
    except ImportError:
        from . import _numpy as _impl

BACKEND = _impl.BACKEND
conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward


def backend_name():
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return BACKEND
