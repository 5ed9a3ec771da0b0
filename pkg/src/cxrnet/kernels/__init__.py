"""Kernel backend selection.

The hot inner loops (convolution, pooling, dense layers, bilinear
resampling) exist twice: a compiled Cython core (``cxrnet.kernels._ext``)
and a vectorized numpy fallback (``cxrnet.kernels._numpy``). At import
time the compiled core is picked when present. Set ``CXRNET_KERNELS=py``
to force the fallback or ``CXRNET_KERNELS=ext`` to insist on the compiled
core (raising if it was never built). Both backends accumulate in float64
and share per-element summation order, so results agree to float32
rounding; within one backend results are bit-reproducible.
"""

import os

_choice = os.environ.get("CXRNET_KERNELS", "auto").strip().lower()

if _choice in ("", "auto"):
    try:
        from . import _ext as _impl
        KERNEL_BACKEND = "ext"
    except ImportError:
        from . import _numpy as _impl
        KERNEL_BACKEND = "numpy"
elif _choice == "ext":
    from . import _ext as _impl
    KERNEL_BACKEND = "ext"
elif _choice in ("py", "numpy"):
    from . import _numpy as _impl
    KERNEL_BACKEND = "numpy"
else:
    raise ValueError(
        f"CXRNET_KERNELS must be 'auto', 'ext' or 'py', got {_choice!r}"
    )

conv2d = _impl.conv2d
maxpool2d = _impl.maxpool2d
maxpool2d_backward = _impl.maxpool2d_backward
dense = _impl.dense
dense_vjp = _impl.dense_vjp
bilinear_resize = _impl.bilinear_resize
