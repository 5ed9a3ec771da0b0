"""Vectorized numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (see
``cxrnet.kernels``). Convolution runs as im2col + one matmul per tile of
output rows; the im2col buffer and the matmul are float64 so that both
backends accumulate in double precision and differ from each other only
through the final rounding to float32.

All functions assume validated, C-contiguous float32 inputs; argument
checking lives in ``cxrnet.tensor``.
"""

import numpy as np

# Cap on the float64 im2col tile (elements), about 64 MiB.
_TILE_ELEMS = 8_000_000


def conv2d(x, kernel, bias, stride, padding):
    cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    if padding:
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x
    kmat = kernel.reshape(cout, cin * kh * kw).astype(np.float64)
    out = np.empty((cout, oh * ow), dtype=np.float64)
    tile = max(1, _TILE_ELEMS // max(1, cin * kh * kw * ow))
    for y0 in range(0, oh, tile):
        y1 = min(oh, y0 + tile)
        rows = y1 - y0
        # cols[c, ki, kj, y, x] = padded input at (c, (y0+y)*s + ki, x*s + kj);
        # flattening the first three axes gives the (c, ki, kj) summation
        # order shared with the compiled kernel.
        cols = np.empty((cin, kh, kw, rows, ow), dtype=np.float64)
        for ki in range(kh):
            ys = y0 * stride + ki
            ye = ys + (rows - 1) * stride + 1
            for kj in range(kw):
                xe = kj + (ow - 1) * stride + 1
                cols[:, ki, kj] = xp[:, ys:ye:stride, kj:xe:stride]
        out[:, y0 * ow:y1 * ow] = kmat @ cols.reshape(cin * kh * kw, rows * ow)
    out += bias.astype(np.float64)[:, None]
    return out.reshape(cout, oh, ow).astype(np.float32)


def maxpool2d(x, window, stride):
    c, h, w = x.shape
    windows = np.lib.stride_tricks.sliding_window_view(x, (window, window), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # [C, oh, ow, window, window]
    oh, ow = windows.shape[1], windows.shape[2]
    flat_win = windows.reshape(c, oh, ow, window * window)
    # np.argmax picks the first maximum, which is the row-major tie-break.
    arg = np.argmax(flat_win, axis=3)
    out = np.take_along_axis(flat_win, arg[..., None], axis=3)[..., 0]
    wy = arg // window
    wx = arg % window
    iy = np.arange(oh, dtype=np.int64)[None, :, None] * stride + wy
    ix = np.arange(ow, dtype=np.int64)[None, None, :] * stride + wx
    ic = np.arange(c, dtype=np.int64)[:, None, None]
    indices = ic * (h * w) + iy * w + ix
    return np.ascontiguousarray(out, dtype=np.float32), np.ascontiguousarray(indices)


def maxpool2d_backward(grad_out, indices, input_shape):
    grad_in = np.zeros(int(np.prod(input_shape)), dtype=np.float32)
    np.add.at(grad_in, indices.ravel(), grad_out.ravel())
    return grad_in.reshape(input_shape)


def dense(x, weight, bias):
    out = weight.astype(np.float64) @ x.astype(np.float64) + bias.astype(np.float64)
    return out.astype(np.float32)


def dense_vjp(x, weight, grad_out):
    grad_w = grad_out[:, None] * x[None, :]
    grad_b = grad_out.copy()
    grad_x = (weight.astype(np.float64).T @ grad_out.astype(np.float64)).astype(np.float32)
    return grad_w, grad_b, grad_x


def _axis_coords(n_in, n_out):
    # Half-pixel (align-corners-false) source coordinates, clamped.
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, float(n_in - 1))
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


def bilinear_resize(img, out_h, out_w):
    _, h, w = img.shape
    y0, y1, fy = _axis_coords(h, out_h)
    x0, x1, fx = _axis_coords(w, out_w)
    im = img.astype(np.float64)
    tl = im[:, y0[:, None], x0[None, :]]
    tr = im[:, y0[:, None], x1[None, :]]
    bl = im[:, y1[:, None], x0[None, :]]
    br = im[:, y1[:, None], x1[None, :]]
    fy = fy[None, :, None]
    fx = fx[None, None, :]
    top = (1.0 - fx) * tl + fx * tr
    bot = (1.0 - fx) * bl + fx * br
    out = (1.0 - fy) * top + fy * bot
    return out.astype(np.float32)
