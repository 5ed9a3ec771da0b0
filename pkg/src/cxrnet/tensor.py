"""Dense-array primitives for the classification pipeline.

Arrays are plain numpy ``float32`` C-order ndarrays throughout ("tensor"
below always means that). Image-like tensors are laid out [channels,
height, width], row-major with the last axis fastest. Every operation in
this module is a pure function: no argument is mutated and identical
inputs produce bit-identical outputs, so concurrent calls are safe.

Convolution is cross-correlation (no kernel flip), the convention under
which mainstream pretrained checkpoints import unchanged. Max pooling
breaks ties toward the first element of the row-major window scan and
drops trailing rows/columns that do not fill a window. Bilinear resizing
uses the half-pixel (align-corners-false) source mapping. The ReLU
subgradient at exactly zero is zero.
"""

import numpy as np

from . import kernels
from .errors import ShapeError

Tensor = np.ndarray
PoolIndices = np.ndarray


def astensor(values) -> np.ndarray:
    """Coerce to a C-contiguous float32 array."""
    return np.ascontiguousarray(values, dtype=np.float32)


def _f32(a, what: str, ndim: int | None = None) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float32)
    if ndim is not None and a.ndim != ndim:
        raise ShapeError(f"{what} must have {ndim} axes, got shape {a.shape}")
    return a


def conv2d(x, kernel, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation of a [Cin,H,W] tensor with a [Cout,Cin,kh,kw] kernel.

    out[o,y,x] = bias[o] + sum_{c,i,j} x[c, y*stride - padding + i,
    x*stride - padding + j] * kernel[o,c,i,j], out-of-range input read as
    zero. Output is [Cout, (H+2p-kh)//stride + 1, (W+2p-kw)//stride + 1].
    """
    x = _f32(x, "conv2d input", 3)
    kernel = _f32(kernel, "conv2d kernel", 4)
    bias = _f32(bias, "conv2d bias", 1)
    if stride < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be >= 0, got {padding}")
    cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError(
            f"conv2d kernel axis 1 (input channels) is {kcin}, input has {cin} channels"
        )
    if bias.shape[0] != cout:
        raise ShapeError(
            f"conv2d bias axis 0 is {bias.shape[0]}, kernel has {cout} output channels"
        )
    if h + 2 * padding < kh:
        raise ShapeError(
            f"conv2d height {h} with padding {padding} is smaller than kernel height {kh}"
        )
    if w + 2 * padding < kw:
        raise ShapeError(
            f"conv2d width {w} with padding {padding} is smaller than kernel width {kw}"
        )
    return kernels.conv2d(x, kernel, bias, stride, padding)


def maxpool2d(x, window: int = 2, stride: int = 2) -> tuple[Tensor, PoolIndices]:
    """Max pool a [C,H,W] tensor; also return the winners' flat input offsets.

    Trailing rows/columns that do not fill a window are discarded, so the
    output is [C, (H-window)//stride + 1, (W-window)//stride + 1]. The
    returned int64 index tensor has the output shape and addresses the flat
    row-major input; ties go to the first element in the window scan.
    """
    x = _f32(x, "maxpool2d input", 3)
    if window < 1:
        raise ShapeError(f"maxpool2d window must be >= 1, got {window}")
    if stride < 1:
        raise ShapeError(f"maxpool2d stride must be >= 1, got {stride}")
    _, h, w = x.shape
    if h < window:
        raise ShapeError(f"maxpool2d height {h} is smaller than window {window}")
    if w < window:
        raise ShapeError(f"maxpool2d width {w} is smaller than window {window}")
    return kernels.maxpool2d(x, window, stride)


def maxpool2d_backward(grad_out, indices, input_shape) -> Tensor:
    """Scatter-accumulate pooled gradients back onto the pooling input."""
    grad_out = _f32(grad_out, "maxpool2d_backward gradient", 3)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if grad_out.shape != indices.shape:
        raise ShapeError(
            f"maxpool2d_backward gradient shape {grad_out.shape} does not match "
            f"index shape {indices.shape}"
        )
    input_shape = tuple(int(n) for n in input_shape)
    if len(input_shape) != 3:
        raise ShapeError(f"maxpool2d_backward input_shape must be rank 3, got {input_shape}")
    total = int(np.prod(input_shape))
    if indices.size and (indices.min() < 0 or indices.max() >= total):
        raise ShapeError(
            f"maxpool2d_backward indices out of range for input shape {input_shape} "
            "(corrupted indices)"
        )
    return kernels.maxpool2d_backward(grad_out, indices, input_shape)


def relu(x) -> Tensor:
    """Elementwise max(0, x)."""
    x = _f32(x, "relu input")
    return np.maximum(x, np.float32(0.0))


def relu_mask(x) -> Tensor:
    """1.0 where x > 0 else 0.0 (the subgradient at 0 is 0)."""
    x = _f32(x, "relu_mask input")
    return (x > 0).astype(np.float32)


def dense(x, weight, bias) -> Tensor:
    """Affine map of a length-n vector by an [m,n] weight and length-m bias."""
    x = _f32(x, "dense input", 1)
    weight = _f32(weight, "dense weight", 2)
    bias = _f32(bias, "dense bias", 1)
    m, n = weight.shape
    if x.shape[0] != n:
        raise ShapeError(f"dense input has {x.shape[0]} features, weight axis 1 is {n}")
    if bias.shape[0] != m:
        raise ShapeError(f"dense bias axis 0 is {bias.shape[0]}, weight axis 0 is {m}")
    return kernels.dense(x, weight, bias)


def dense_vjp(x, weight, grad_out) -> tuple[Tensor, Tensor, Tensor]:
    """Vector-Jacobian products of ``dense``: (d/dweight, d/dbias, d/dinput).

    grad_w[i,j] = grad_out[i] * x[j]; grad_b = grad_out;
    grad_x[j] = sum_i weight[i,j] * grad_out[i].
    """
    x = _f32(x, "dense_vjp input", 1)
    weight = _f32(weight, "dense_vjp weight", 2)
    grad_out = _f32(grad_out, "dense_vjp grad_out", 1)
    m, n = weight.shape
    if x.shape[0] != n:
        raise ShapeError(f"dense_vjp input has {x.shape[0]} features, weight axis 1 is {n}")
    if grad_out.shape[0] != m:
        raise ShapeError(
            f"dense_vjp grad_out axis 0 is {grad_out.shape[0]}, weight axis 0 is {m}"
        )
    return kernels.dense_vjp(x, weight, grad_out)


def softmax(logits) -> Tensor:
    """Max-shifted softmax of a vector; components sum to 1 within 1e-6."""
    z = _f32(logits, "softmax input", 1)
    if z.shape[0] < 1:
        raise ShapeError("softmax input must have at least one component")
    if not np.isfinite(z).all():
        raise ShapeError("softmax input must be finite")
    z64 = z.astype(np.float64)
    e = np.exp(z64 - z64.max())
    return (e / e.sum()).astype(np.float32)


def bilinear_resize(img, out_h: int, out_w: int) -> Tensor:
    """Resample a [C,H,W] tensor to [C,out_h,out_w].

    Half-pixel convention: source coordinate (dst + 0.5) * (in/out) - 0.5,
    clamped to the valid range, then bilinear interpolation of the four
    neighbors. Constant images map to constant images.
    """
    img = _f32(img, "bilinear_resize input", 3)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize output extents must be >= 1, got {out_h}x{out_w}")
    return kernels.bilinear_resize(img, int(out_h), int(out_w))
