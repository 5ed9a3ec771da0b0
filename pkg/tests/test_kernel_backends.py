"""Compiled core vs numpy fallback: same results to float32 rounding."""

import numpy as np
import pytest

from cxrnet.kernels import _numpy

ext = pytest.importorskip("cxrnet.kernels._ext",
                          reason="compiled kernel core not built")


def test_conv2d_agreement(rng):
    for _ in range(60):
        cin = int(rng.integers(1, 5))
        cout = int(rng.integers(1, 5))
        ksz = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        h = int(rng.integers(max(ksz, 2), 11))
        w = int(rng.integers(max(ksz, 2), 11))
        x = rng.normal(size=(cin, h, w)).astype(np.float32)
        k = rng.normal(size=(cout, cin, ksz, ksz)).astype(np.float32)
        b = rng.normal(size=cout).astype(np.float32)
        a = _numpy.conv2d(x, k, b, stride, padding)
        c = ext.conv2d(x, k, b, stride, padding)
        # both accumulate in float64, so disagreement can only be the final
        # rounding of near-tie values
        np.testing.assert_allclose(a, c, rtol=1e-6, atol=1e-6)


def test_conv2d_agreement_at_feature_scale(rng):
    x = rng.normal(size=(32, 14, 14)).astype(np.float32)
    k = rng.normal(scale=0.05, size=(48, 32, 3, 3)).astype(np.float32)
    b = rng.normal(size=48).astype(np.float32)
    np.testing.assert_allclose(_numpy.conv2d(x, k, b, 1, 1), ext.conv2d(x, k, b, 1, 1),
                               rtol=1e-6, atol=1e-6)


def test_maxpool_bitwise(rng):
    for _ in range(40):
        c = int(rng.integers(1, 4))
        h = int(rng.integers(2, 13))
        w = int(rng.integers(2, 13))
        win = int(rng.integers(1, min(h, w) + 1))
        stride = int(rng.integers(1, 4))
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        o1, i1 = _numpy.maxpool2d(x, win, stride)
        o2, i2 = ext.maxpool2d(x, win, stride)
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(i1, i2)


def test_maxpool_backward_bitwise(rng):
    x = rng.normal(size=(3, 8, 8)).astype(np.float32)
    _, idx = _numpy.maxpool2d(x, 2, 2)
    g = rng.normal(size=(3, 4, 4)).astype(np.float32)
    np.testing.assert_array_equal(
        _numpy.maxpool2d_backward(g, idx, (3, 8, 8)),
        ext.maxpool2d_backward(g, idx, (3, 8, 8)),
    )


def test_dense_and_vjp_agreement(rng):
    x = rng.normal(size=40).astype(np.float32)
    w = rng.normal(size=(17, 40)).astype(np.float32)
    b = rng.normal(size=17).astype(np.float32)
    g = rng.normal(size=17).astype(np.float32)
    np.testing.assert_allclose(_numpy.dense(x, w, b), ext.dense(x, w, b),
                               rtol=1e-6, atol=1e-6)
    for a, c in zip(_numpy.dense_vjp(x, w, g), ext.dense_vjp(x, w, g)):
        np.testing.assert_allclose(a, c, rtol=1e-6, atol=1e-6)


def test_bilinear_resize_bitwise(rng):
    x = rng.normal(size=(3, 14, 14)).astype(np.float32)
    np.testing.assert_array_equal(_numpy.bilinear_resize(x, 237, 237),
                                  ext.bilinear_resize(x, 237, 237))
    np.testing.assert_array_equal(_numpy.bilinear_resize(x, 5, 9),
                                  ext.bilinear_resize(x, 5, 9))
