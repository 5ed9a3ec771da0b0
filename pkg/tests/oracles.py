"""Independent reference implementations used to check the real kernels.

Everything here is deliberately naive: plain Python loops and float64
arithmetic, no shared code with cxrnet.tensor or cxrnet.kernels. These
stay the ground truth in the tests; the optimized paths are compared
against them, never the other way around.
"""

import numpy as np


def conv2d_reference(x, kernel, bias, stride=1, padding=0):
    """Direct quadruple-loop cross-correlation with zero padding."""
    cin, h, w = x.shape
    cout, _, kh, kw = kernel.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for o in range(cout):
        for y in range(oh):
            for xo in range(ow):
                acc = float(bias[o])
                for c in range(cin):
                    for i in range(kh):
                        for j in range(kw):
                            iy = y * stride - padding + i
                            ix = xo * stride - padding + j
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += float(x[c, iy, ix]) * float(kernel[o, c, i, j])
                out[o, y, xo] = acc
    return out


def dense_reference(x, weight, bias):
    """Double-loop affine map."""
    m, n = weight.shape
    out = np.zeros(m, dtype=np.float64)
    for i in range(m):
        acc = float(bias[i])
        for j in range(n):
            acc += float(weight[i, j]) * float(x[j])
        out[i] = acc
    return out


def softmax_reference(z):
    """Float64 softmax without the max shift (safe for moderate inputs)."""
    e = np.exp(np.asarray(z, dtype=np.float64))
    return e / e.sum()


def central_difference(f, x, h=1e-3):
    """Per-component central finite differences of a scalar function."""
    x = np.asarray(x, dtype=np.float32)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + h
        f_plus = f(bumped.reshape(x.shape))
        bumped[i] = flat[i] - h
        f_minus = f(bumped.reshape(x.shape))
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def adam_reference(param0, grad, lr, steps, beta1=0.9, beta2=0.999, eps=1e-8):
    """Scalar Adam recurrence in float64."""
    p = float(param0)
    m = 0.0
    v = 0.0
    for t in range(1, steps + 1):
        g = float(grad)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return p


def rel_err(a, b, floor=1e-5):
    """Elementwise |a-b| / max(|a|, |b|, floor), reduced to the max."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())
