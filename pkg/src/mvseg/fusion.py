"""Combining per-view class predictions in a common reference view.

Two families of fusion are provided. Probability-space fusion multiplies
per-view class likelihoods pixelwise and renormalizes (assuming per-view
independence); the equivalent, numerically preferable score-space path sums
unnormalized scores and applies one softmax at the end. Feature-space
fusion takes the elementwise maximum of warped activations.

The reference view's own prediction is always view 0 of the input list and
is treated as valid everywhere, so no fused pixel is ever undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvseg.core import ShapeError, as_tensor
from mvseg.warp_sampler import SampledMap

# Floor applied to probabilities before products/logs in the
# probability-space path; one exact zero would veto a class irrecoverably.
PROB_FLOOR = 1e-12


@dataclass
class ViewPrediction:
    """Per-view class scores (K, H, W) plus the warp validity mask."""

    scores: np.ndarray
    validity: np.ndarray  # (H, W) bool
    view_id: int = 0


def softmax(scores):
    """Per-pixel softmax over the channel axis, stabilized by max subtraction."""
    s = as_tensor(scores)
    if s.shape[0] < 2:
        raise ShapeError(f"softmax needs K >= 2 channels, got {s.shape[0]}")
    z = s - s.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def log_softmax(scores):
    s = as_tensor(scores)
    z = s - s.max(axis=0, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=0, keepdims=True))


def _check_views(views):
    if not views:
        raise ShapeError("fusion needs at least one view")
    shape = views[0].scores.shape
    for v in views:
        if v.scores.shape != shape:
            raise ShapeError(
                f"view {v.view_id} shape {v.scores.shape} != {shape}"
            )
        if v.validity.shape != shape[1:]:
            raise ShapeError(
                f"view {v.view_id} validity shape {v.validity.shape} "
                f"does not match scores {shape}"
            )
    return shape


def bayesian_fuse_probs(views):
    """Fuse per-view probability maps by pixelwise product + renormalization.

    ``views`` hold probabilities in their ``scores`` field. Only views
    valid at a pixel enter the product; pixels where no view is valid fall
    back to view 0 (the reference view's own prediction). Products are
    accumulated in log space so fifty-view fusion cannot underflow.
    """
    _check_views(views)
    if len(views) == 1:
        return views[0].scores.copy()
    log_acc = np.zeros_like(views[0].scores)
    any_valid = np.zeros(views[0].validity.shape, dtype=bool)
    for v in views:
        logp = np.log(np.clip(as_tensor(v.scores), PROB_FLOOR, None))
        log_acc += np.where(v.validity[None, :, :], logp, 0.0)
        any_valid |= v.validity
    fallback = np.log(np.clip(as_tensor(views[0].scores), PROB_FLOOR, None))
    log_acc = np.where(any_valid[None, :, :], log_acc, fallback)
    z = log_acc - log_acc.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def bayesian_fuse_scores(views):
    """Fuse per-view score maps by summation, then one softmax.

    Equivalent to :func:`bayesian_fuse_probs` applied to the softmax of
    each view, without needing a probability floor.
    """
    _check_views(views)
    if len(views) == 1:
        return softmax(views[0].scores)
    total = np.zeros_like(views[0].scores)
    any_valid = np.zeros(views[0].validity.shape, dtype=bool)
    for v in views:
        total += np.where(v.validity[None, :, :], as_tensor(v.scores), 0.0)
        any_valid |= v.validity
    total = np.where(any_valid[None, :, :], total, as_tensor(views[0].scores))
    return softmax(total)


def sum_scores(views):
    """Sum valid per-view scores without the final softmax.

    Pixels with no valid view fall back to view 0's scores, so summing a
    single view is the identity.
    """
    _check_views(views)
    if len(views) == 1:
        return views[0].scores.copy()
    total = np.zeros_like(views[0].scores)
    any_valid = np.zeros(views[0].validity.shape, dtype=bool)
    for v in views:
        total += np.where(v.validity[None, :, :], as_tensor(v.scores), 0.0)
        any_valid |= v.validity
    return np.where(any_valid[None, :, :], total, as_tensor(views[0].scores))


def recursive_fuse(prior, likelihood):
    """One Bayes update: posterior ∝ likelihood * prior, per pixel.

    Folding a sequence of views left-to-right through this update equals
    the batch probability-space fusion of the same views.
    """
    p = as_tensor(prior)
    q = as_tensor(likelihood)
    if p.shape != q.shape:
        raise ShapeError(f"prior shape {p.shape} != likelihood shape {q.shape}")
    post = np.clip(p, PROB_FLOOR, None) * np.clip(q, PROB_FLOOR, None)
    return post / post.sum(axis=0, keepdims=True)


def multiview_maxpool(maps):
    """Elementwise maximum over views, honoring per-view validity.

    Returns (pooled SampledMap, argmax view index per element). A view
    participates at a pixel only where its validity mask is True; the
    pooled validity is the OR of the inputs. Ties go to the lowest view
    index so gradient routing is deterministic. Elements with no valid
    view carry value 0 and argmax -1.
    """
    if not maps:
        raise ShapeError("multiview_maxpool needs at least one view")
    shape = maps[0].values.shape
    for m in maps:
        if m.values.shape != shape:
            raise ShapeError(f"map shape {m.values.shape} != {shape}")
    if len(maps) == 1:
        argmax = np.where(maps[0].validity[None, :, :], 0, -1)
        values = np.where(maps[0].validity[None, :, :], maps[0].values, 0.0)
        return SampledMap(values, maps[0].validity.copy()), argmax

    stack = np.stack([m.values for m in maps])  # (V, C, H, W)
    vmask = np.stack([m.validity for m in maps])[:, None, :, :]  # (V, 1, H, W)
    masked = np.where(vmask, stack, -np.inf)
    argmax = masked.argmax(axis=0)  # first max wins ties
    pooled = np.take_along_axis(masked, argmax[None], axis=0)[0]
    any_valid = vmask.any(axis=0)[0]
    pooled = np.where(any_valid[None, :, :], pooled, 0.0)
    argmax = np.where(any_valid[None, :, :], argmax, -1)
    return SampledMap(pooled, any_valid), argmax


def multiview_maxpool_backward(grad_pooled, argmax, num_views):
    """Route the pooled gradient back to the argmax view per element."""
    grad = as_tensor(grad_pooled)
    grads = []
    for i in range(num_views):
        grads.append(np.where(argmax == i, grad, 0.0))
    return grads
