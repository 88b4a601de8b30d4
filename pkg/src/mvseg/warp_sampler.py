"""Differentiable bilinear sampling through a fixed warp grid.

The grid is data, not a parameter: gradients flow to the sampled source
tensor only, never to the grid coordinates. Out-of-image taps read as zero
and the validity mask excludes any output pixel whose sampling location
leaves the source image, which makes the backward pass the exact transpose
of the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvseg.core import ShapeError, as_tensor
from mvseg.geometry import WarpGrid, unnormalize_coords


@dataclass
class SampledMap:
    """A tensor synthesized in the target view plus its validity mask.

    Invalid pixels carry value 0 across all channels and must be masked
    out by downstream consumers.
    """

    values: np.ndarray  # (C, H, W)
    validity: np.ndarray  # (H, W) bool


def _sample_setup(grid: WarpGrid, source_shape):
    """Shared tap indices/weights for the forward and backward passes."""
    hs, ws = source_shape
    x = unnormalize_coords(grid.u, ws)
    y = unnormalize_coords(grid.v, hs)
    inside = (x >= 0) & (x <= ws - 1) & (y >= 0) & (y <= hs - 1)
    valid = grid.valid & inside

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    wx = x - x0
    wy = y - y0

    taps = []
    for dy, dx, wgt in (
        (0, 0, (1 - wy) * (1 - wx)),
        (0, 1, (1 - wy) * wx),
        (1, 0, wy * (1 - wx)),
        (1, 1, wy * wx),
    ):
        ty = y0 + dy
        tx = x0 + dx
        ok = valid & (ty >= 0) & (ty < hs) & (tx >= 0) & (tx < ws)
        taps.append((np.clip(ty, 0, hs - 1), np.clip(tx, 0, ws - 1),
                     np.where(ok, wgt, 0.0)))
    return taps, valid


def bilinear_sample(source, grid: WarpGrid) -> SampledMap:
    """Sample a (C, Hs, Ws) source tensor at the grid's warped locations.

    Each valid output pixel is the bilinear blend of the four source
    pixels nearest the unnormalized grid location; the source spatial
    shape defines the [-1, 1] frame. Output validity is the grid validity
    AND the sampling location lying inside the source image.
    """
    src = as_tensor(source)
    c = src.shape[0]
    h, w = grid.shape
    out = np.zeros((c, h, w), dtype=np.float64)
    taps, valid = _sample_setup(grid, src.shape[1:])
    for ty, tx, wgt in taps:
        out += wgt[None, :, :] * src[:, ty, tx]
    out[:, ~valid] = 0.0
    return SampledMap(values=out, validity=valid)


def bilinear_sample_backward(grad_output, grid: WarpGrid, source_shape):
    """Gradient of :func:`bilinear_sample` with respect to the source.

    Scatters each output gradient to its four taps with the forward
    weights (the exact transpose: <sample(u), v> == <u, backward(v)>).
    Invalid output pixels contribute nothing; the grid is fixed, so there
    is no gradient with respect to its coordinates.
    """
    grad = as_tensor(grad_output)
    if len(source_shape) == 3:
        c, hs, ws = source_shape
    else:
        hs, ws = source_shape
        c = grad.shape[0]
    if grad.shape[0] != c:
        raise ShapeError(
            f"grad channels {grad.shape[0]} != source channels {c}"
        )
    if grad.shape[1:] != grid.shape:
        raise ShapeError(
            f"grad spatial shape {grad.shape[1:]} != grid shape {grid.shape}"
        )
    taps, valid = _sample_setup(grid, (hs, ws))
    grad = np.where(valid[None, :, :], grad, 0.0)
    grad_source = np.zeros((c, hs, ws), dtype=np.float64)
    flat = grad_source.reshape(c, hs * ws)
    for ty, tx, wgt in taps:
        idx = (ty * ws + tx).ravel()
        contrib = (grad * wgt[None, :, :]).reshape(c, -1)
        np.add.at(flat, (slice(None), idx), contrib)
    return grad_source
