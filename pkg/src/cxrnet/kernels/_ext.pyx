# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel core.

Direct (non-im2col) convolution with a float64 accumulator per output
element, parallelized over output channels; pooling, dense layers and
bilinear resampling as plain typed loops. Per-element summation order is
(channel, kernel row, kernel col) / (input feature), matching the numpy
backend, so the two backends agree to float32 rounding.
"""

import numpy as np

from cython.parallel cimport prange
from libc.math cimport floor as c_floor


def conv2d(const float[:, :, ::1] x, const float[:, :, :, ::1] kernel,
           const float[::1] bias, int stride, int padding):
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t cout = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3]
    cdef Py_ssize_t oh = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * padding - kw) // stride + 1

    # pad + widen once so the accumulation loop is branch- and cast-free;
    # the padding zeros contribute exact 0.0 terms
    padded_arr = np.zeros((cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    padded_arr[:, padding:padding + h, padding:padding + w] = x
    cdef double[:, :, ::1] padded = padded_arr

    acc_arr = np.empty((cout, oh * ow), dtype=np.float64)
    cdef double[:, ::1] acc = acc_arr
    cdef Py_ssize_t o, c, ki, kj, y, xo, iy, row
    cdef double wt

    for o in prange(cout, nogil=True, schedule='static'):
        for row in range(oh * ow):
            acc[o, row] = <double>bias[o]
        for c in range(cin):
            for ki in range(kh):
                for kj in range(kw):
                    wt = <double>kernel[o, c, ki, kj]
                    for y in range(oh):
                        iy = y * stride + ki
                        row = y * ow
                        if stride == 1:
                            # unit-stride walk, vectorizable
                            for xo in range(ow):
                                acc[o, row + xo] = acc[o, row + xo] + wt * padded[c, iy, kj + xo]
                        else:
                            for xo in range(ow):
                                acc[o, row + xo] = acc[o, row + xo] + wt * padded[c, iy, xo * stride + kj]

    return acc_arr.astype(np.float32).reshape(cout, oh, ow)


def maxpool2d(const float[:, :, ::1] x, int window, int stride):
    cdef Py_ssize_t c = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t oh = (h - window) // stride + 1
    cdef Py_ssize_t ow = (w - window) // stride + 1

    out_arr = np.empty((c, oh, ow), dtype=np.float32)
    idx_arr = np.empty((c, oh, ow), dtype=np.int64)
    cdef float[:, :, ::1] out = out_arr
    cdef long long[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t ch, y, xo, wy, wx, iy, ix
    cdef float best, v
    cdef Py_ssize_t best_at

    for ch in prange(c, nogil=True, schedule='static'):
        for y in range(oh):
            for xo in range(ow):
                best = x[ch, y * stride, xo * stride]
                best_at = ch * h * w + y * stride * w + xo * stride
                for wy in range(window):
                    iy = y * stride + wy
                    for wx in range(window):
                        ix = xo * stride + wx
                        v = x[ch, iy, ix]
                        # strict > keeps the first (row-major) maximum
                        if v > best:
                            best = v
                            best_at = ch * h * w + iy * w + ix
                out[ch, y, xo] = best
                idx[ch, y, xo] = best_at
    return out_arr, idx_arr


def maxpool2d_backward(const float[:, :, ::1] grad_out,
                       const long long[:, :, ::1] indices, input_shape):
    grad_arr = np.zeros(int(np.prod(input_shape)), dtype=np.float32)
    cdef float[::1] grad = grad_arr
    cdef Py_ssize_t c = grad_out.shape[0], oh = grad_out.shape[1], ow = grad_out.shape[2]
    cdef Py_ssize_t ch, y, xo
    for ch in range(c):
        for y in range(oh):
            for xo in range(ow):
                grad[indices[ch, y, xo]] += grad_out[ch, y, xo]
    return grad_arr.reshape(input_shape)


def dense(const float[::1] x, const float[:, ::1] weight, const float[::1] bias):
    cdef Py_ssize_t m = weight.shape[0], n = weight.shape[1]
    out_arr = np.empty(m, dtype=np.float32)
    cdef float[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc
    for i in prange(m, nogil=True, schedule='static'):
        acc = <double>bias[i]
        for j in range(n):
            acc = acc + <double>weight[i, j] * <double>x[j]
        out[i] = <float>acc
    return out_arr


def dense_vjp(const float[::1] x, const float[:, ::1] weight, const float[::1] grad_out):
    cdef Py_ssize_t m = weight.shape[0], n = weight.shape[1]
    gw_arr = np.empty((m, n), dtype=np.float32)
    gb_arr = np.empty(m, dtype=np.float32)
    gx_acc = np.zeros(n, dtype=np.float64)
    cdef float[:, ::1] gw = gw_arr
    cdef float[::1] gb = gb_arr
    cdef double[::1] gx = gx_acc
    cdef Py_ssize_t i, j
    cdef float g
    for i in range(m):
        g = grad_out[i]
        gb[i] = g
        for j in range(n):
            gw[i, j] = g * x[j]
            gx[j] += <double>weight[i, j] * <double>g
    return gw_arr, gb_arr, gx_acc.astype(np.float32)


def bilinear_resize(const float[:, :, ::1] img, int out_h, int out_w):
    cdef Py_ssize_t c = img.shape[0], h = img.shape[1], w = img.shape[2]
    out_arr = np.empty((c, out_h, out_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr

    y0_arr = np.empty(out_h, dtype=np.int64)
    y1_arr = np.empty(out_h, dtype=np.int64)
    fy_arr = np.empty(out_h, dtype=np.float64)
    x0_arr = np.empty(out_w, dtype=np.int64)
    x1_arr = np.empty(out_w, dtype=np.int64)
    fx_arr = np.empty(out_w, dtype=np.float64)
    cdef long long[::1] y0 = y0_arr, y1 = y1_arr, x0 = x0_arr, x1 = x1_arr
    cdef double[::1] fy = fy_arr, fx = fx_arr

    cdef double scale, src
    cdef Py_ssize_t i, ch, y, xo
    scale = <double>h / <double>out_h
    for i in range(out_h):
        src = (<double>i + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > <double>(h - 1):
            src = <double>(h - 1)
        y0[i] = <long long>c_floor(src)
        y1[i] = y0[i] + 1 if y0[i] + 1 < h else h - 1
        fy[i] = src - c_floor(src)
    scale = <double>w / <double>out_w
    for i in range(out_w):
        src = (<double>i + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > <double>(w - 1):
            src = <double>(w - 1)
        x0[i] = <long long>c_floor(src)
        x1[i] = x0[i] + 1 if x0[i] + 1 < w else w - 1
        fx[i] = src - c_floor(src)

    cdef double tl, tr, bl, br, top, bot
    for ch in prange(c, nogil=True, schedule='static'):
        for y in range(out_h):
            for xo in range(out_w):
                tl = <double>img[ch, y0[y], x0[xo]]
                tr = <double>img[ch, y0[y], x1[xo]]
                bl = <double>img[ch, y1[y], x0[xo]]
                br = <double>img[ch, y1[y], x1[xo]]
                top = (1.0 - fx[xo]) * tl + fx[xo] * tr
                bot = (1.0 - fx[xo]) * bl + fx[xo] * br
                out[ch, y, xo] = <float>((1.0 - fy[y]) * top + fy[y] * bot)
    return out_arr
