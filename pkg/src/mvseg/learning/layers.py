"""Differentiable building blocks with hand-derived backward passes.

All layers work on single images of shape (C, H, W), stride 1, double
precision. Convolutions keep the spatial shape ("same" padding, odd
kernels); pooling halves it; unpooling doubles it by scattering values to
the switch locations remembered by the matching pool.
"""

from __future__ import annotations

import numpy as np

from mvseg.core import ShapeError


def _im2col(x, kh, kw, pad):
    """Extract stride-1 patches of a zero-padded (C, H, W) array.

    Returns (C*kh*kw, H*W) with the channel axis outermost, matching the
    (Cout, Cin*kh*kw) weight matrix layout used below.
    """
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # windows: (C, H, W, kh, kw) -> (C, kh, kw, H, W)
    return windows.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, h * w)


def _col2im(cols, c, h, w, kh, kw, pad):
    """Adjoint of _im2col: scatter-add patch columns back into an image."""
    gx = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, kh, kw, h, w)
    for i in range(kh):
        for j in range(kw):
            gx[:, i : i + h, j : j + w] += cols[:, i, j]
    return gx[:, pad : pad + h, pad : pad + w]


def conv2d_forward(x, w, b):
    """Cross-correlation with kernel w (Cout, Cin, kh, kw) and bias b (Cout,)."""
    cout, cin, kh, kw = w.shape
    if x.shape[0] != cin:
        raise ShapeError(f"conv input channels {x.shape[0]} != kernel {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("conv kernels must be odd-sized")
    _, h, wd = x.shape
    cols = _im2col(x, kh, kw, kh // 2)
    y = w.reshape(cout, -1) @ cols + b[:, None]
    return y.reshape(cout, h, wd)


def conv2d_backward(x, w, grad_y):
    """Gradients of conv2d_forward w.r.t. input, kernel and bias."""
    cout, cin, kh, kw = w.shape
    _, h, wd = x.shape
    gy = grad_y.reshape(cout, -1)
    cols = _im2col(x, kh, kw, kh // 2)
    grad_w = (gy @ cols.T).reshape(w.shape)
    grad_b = gy.sum(axis=1)
    grad_cols = w.reshape(cout, -1).T @ gy
    grad_x = _col2im(grad_cols, cin, h, wd, kh, kw, kh // 2)
    return grad_x, grad_w, grad_b


def deconv2d_forward(x, w, b):
    """Stride-1 transposed convolution with kernel w (Cin, Cout, kh, kw).

    Equivalent to correlating with the spatially flipped, axis-swapped
    kernel, which is how the backward pass of conv2d distributes
    gradients; kept as its own layer because the decoder owns parameters
    in this layout.
    """
    cin, cout, kh, kw = w.shape
    if x.shape[0] != cin:
        raise ShapeError(f"deconv input channels {x.shape[0]} != kernel {cin}")
    w_corr = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return conv2d_forward(x, np.ascontiguousarray(w_corr), b)


def deconv2d_backward(x, w, grad_y):
    w_corr = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_x, grad_w_corr, grad_b = conv2d_backward(x, w_corr, grad_y)
    grad_w = grad_w_corr.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    return grad_x, np.ascontiguousarray(grad_w), grad_b


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_y):
    return np.where(x > 0, grad_y, 0.0)


def maxpool2_forward(x):
    """2x2 max pooling with remembered switch locations.

    Returns (pooled (C, H/2, W/2), switches (C, H/2, W/2) in {0..3}), the
    switch being the flat index of the maximum inside each block (first
    occurrence wins ties, so replay is deterministic).
    """
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    blocks = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    blocks = blocks.reshape(c, h // 2, w // 2, 4)
    switches = blocks.argmax(axis=3)
    pooled = np.take_along_axis(blocks, switches[..., None], axis=3)[..., 0]
    return pooled, switches


def maxpool2_backward(switches, grad_y, input_shape):
    c, h, w = input_shape
    blocks = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(blocks, switches[..., None], grad_y[..., None], axis=3)
    return (
        blocks.reshape(c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h, w)
    )


def unpool2_forward(x, switches):
    """Memorized unpooling: place each value at its pool switch location."""
    c, h2, w2 = x.shape
    if switches.shape != x.shape:
        raise ShapeError(f"switches shape {switches.shape} != input {x.shape}")
    blocks = np.zeros((c, h2, w2, 4))
    np.put_along_axis(blocks, switches[..., None], x[..., None], axis=3)
    return (
        blocks.reshape(c, h2, w2, 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, 2 * h2, 2 * w2)
    )


def unpool2_backward(switches, grad_y):
    c, h, w = grad_y.shape
    blocks = grad_y.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    blocks = blocks.reshape(c, h // 2, w // 2, 4)
    return np.take_along_axis(blocks, switches[..., None], axis=3)[..., 0]
