"""Confusion-matrix accumulation and segmentation accuracy scores."""

from __future__ import annotations

import numpy as np

from mvseg.core import (
    IGNORE_LABEL,
    InvalidLabelError,
    ShapeError,
    UndefinedMetricError,
    as_tensor,
)


class ConfusionMatrix:
    """K x K pixel counts; entry (i, j) counts true class i predicted as j."""

    def __init__(self, num_classes):
        if num_classes < 2:
            raise ShapeError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = int(num_classes)
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, predicted, gt, mask=None):
        """Add one image's pixels. IGNORE gt pixels (and masked-out pixels)
        are skipped; out-of-range labels raise InvalidLabelError."""
        pred = np.asarray(predicted)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
        keep = gt != IGNORE_LABEL
        if mask is not None:
            keep &= np.asarray(mask, dtype=bool)
        p = pred[keep].astype(np.int64)
        g = gt[keep].astype(np.int64)
        k = self.num_classes
        for name, v in (("prediction", p), ("ground truth", g)):
            if v.size and (v.min() < 0 or v.max() >= k):
                raise InvalidLabelError(
                    f"{name} label outside [0, {k}) encountered"
                )
        self.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other):
        self.counts += other.counts
        return self

    def total(self):
        return int(self.counts.sum())


def pixelwise_accuracy(cm: ConfusionMatrix):
    """Trace over total: the fraction of evaluated pixels predicted correctly."""
    total = cm.total()
    if total == 0:
        raise UndefinedMetricError("empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def classwise_accuracy(cm: ConfusionMatrix):
    """Mean over classes of per-class recall c_ii / sum_j c_ij.

    Classes with zero ground-truth pixels are excluded from the average.
    """
    if cm.total() == 0:
        raise UndefinedMetricError("empty confusion matrix")
    gt_per_class = cm.counts.sum(axis=1)
    present = gt_per_class > 0
    acc = np.diag(cm.counts)[present] / gt_per_class[present]
    return float(acc.mean())


def mean_iou(cm: ConfusionMatrix):
    """Mean over classes of c_ii / (row sum + column sum - c_ii).

    Classes with zero ground-truth pixels are excluded from the average.
    """
    if cm.total() == 0:
        raise UndefinedMetricError("empty confusion matrix")
    diag = np.diag(cm.counts).astype(np.float64)
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    present = rows > 0
    union = (rows + cols)[present] - diag[present]
    iou = np.where(union > 0, diag[present] / np.maximum(union, 1), 0.0)
    return float(iou.mean())


def per_class_iou(cm: ConfusionMatrix):
    """Per-class IoU; NaN for classes with no ground-truth pixels."""
    diag = np.diag(cm.counts).astype(np.float64)
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    union = (rows + cols - diag).astype(np.float64)
    out = np.full(cm.num_classes, np.nan)
    present = rows > 0
    out[present] = diag[present] / np.maximum(union[present], 1.0)
    return out


def all_metrics(cm: ConfusionMatrix):
    return {
        "pixelwise": pixelwise_accuracy(cm),
        "classwise": classwise_accuracy(cm),
        "iou": mean_iou(cm),
    }


def argmax_labels(scores_or_probs):
    """Per-pixel channel argmax; ties resolve to the lowest class index."""
    t = as_tensor(scores_or_probs)
    if t.shape[0] < 2:
        raise ShapeError(f"need K >= 2 channels, got {t.shape[0]}")
    return t.argmax(axis=0).astype(np.int32)
