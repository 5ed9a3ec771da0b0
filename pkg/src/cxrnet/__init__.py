"""Chest X-ray classification engine.

Frozen convolutional backbone (VGG-16 layout), trainable dense head,
Grad-CAM heatmaps, and the file formats tying them together, with all
numerics implemented in-repo. Runtime dependencies are numpy (array
storage and the fallback kernels) and Pillow (image decoding); the hot
kernels also exist as a compiled extension, selected automatically at
import (see ``cxrnet.kernels``).
"""

from .kernels import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
