"""Core array types and the MVFT binary tensor format.

A "tensor" throughout this package is a dense ``numpy`` array of shape
(C, H, W), dtype float64, row-major with the channel axis outermost, so
per-channel kernels at a fixed pixel iterate with stride H*W.  Label maps
are integer (H, W) arrays where ``IGNORE_LABEL`` marks unlabeled pixels;
masks are boolean (H, W) arrays where False marks pixels that must be
excluded from every loss, fusion and metric computation.  Tensors are
treated as immutable once constructed by all public operations.
"""

from __future__ import annotations

import struct

import numpy as np

# Unlabeled ground-truth pixels. Matches the maximum 8-bit label value so
# the sentinel survives a round-trip through the PGM label format; class
# indices must stay below it.
IGNORE_LABEL = 255

MVFT_MAGIC = b"MVFT"


class MvsegError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MvsegError, ValueError):
    """Array dimensions are invalid or inconsistent."""


class FormatError(MvsegError, ValueError):
    """A file does not conform to its binary/text format."""


class AssociationError(MvsegError, LookupError):
    """A timestamp or frame id could not be associated."""


class ConfigError(MvsegError, ValueError):
    """Invalid configuration or command-line flags."""


class DegenerateSampleError(MvsegError, ValueError):
    """A sample carries no usable (labeled, valid) pixels."""


class InvalidDepthError(MvsegError, ValueError):
    """A depth value violates the positive, finite contract."""


class InvalidLabelError(MvsegError, ValueError):
    """A label value is out of range for the configured class count."""


class UndefinedMetricError(MvsegError, ValueError):
    """A metric was requested from an empty confusion matrix."""


def tensor_new(shape, fill=0.0):
    """Allocate a (C, H, W) float64 tensor filled with a constant.

    Raises ShapeError for non-positive or overflowing dimensions.
    """
    dims = tuple(int(d) for d in shape)
    if len(dims) != 3:
        raise ShapeError(f"tensor shape must be (C, H, W), got {shape!r}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"tensor dimensions must be >= 1, got {dims}")
    n = dims[0] * dims[1] * dims[2]
    if n > 2**40:
        raise ShapeError(f"tensor size {n} overflows the sanity bound")
    return np.full(dims, float(fill), dtype=np.float64)


def as_tensor(a):
    """Validate and return ``a`` as a (C, H, W) float64 array."""
    t = np.asarray(a, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) array, got shape {t.shape}")
    return np.ascontiguousarray(t)


def avg_pool2(t):
    """Average-pool a (C, H, W) tensor by a factor of 2 in each spatial axis.

    Each output element is the mean of its 2x2 input block; preserves the
    global mean exactly. H and W must be even.
    """
    t = as_tensor(t)
    c, h, w = t.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    return t.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def new_label_map(h, w, fill=IGNORE_LABEL):
    return np.full((int(h), int(w)), int(fill), dtype=np.int32)


def check_label_map(labels, num_classes):
    """Raise InvalidLabelError if any non-IGNORE label is >= num_classes."""
    labels = np.asarray(labels)
    bad = (labels != IGNORE_LABEL) & ((labels < 0) | (labels >= num_classes))
    if bad.any():
        where = np.argwhere(bad)[0]
        raise InvalidLabelError(
            f"label {labels[tuple(where)]} at {tuple(where)} out of range "
            f"for {num_classes} classes"
        )


def save_tensor_mvft(path, t):
    """Write a tensor as an MVFT dump.

    Layout: magic b"MVFT", then C, H, W as unsigned 32-bit little-endian,
    then C*H*W IEEE-754 little-endian float64 values, row-major with the
    channel axis outermost.
    """
    t = as_tensor(t)
    c, h, w = t.shape
    with open(path, "wb") as f:
        f.write(MVFT_MAGIC)
        f.write(struct.pack("<III", c, h, w))
        f.write(t.astype("<f8", copy=False).tobytes())


def load_tensor_mvft(path):
    """Read an MVFT dump written by :func:`save_tensor_mvft`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MVFT_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected MVFT")
        header = f.read(12)
        if len(header) != 12:
            raise FormatError(f"{path}: truncated MVFT header")
        c, h, w = struct.unpack("<III", header)
        if c < 1 or h < 1 or w < 1:
            raise FormatError(f"{path}: invalid MVFT dimensions {(c, h, w)}")
        n = c * h * w
        payload = f.read(8 * n)
        if len(payload) != 8 * n:
            raise FormatError(
                f"{path}: truncated MVFT payload at byte {16 + len(payload)}, "
                f"expected {8 * n} data bytes"
            )
    data = np.frombuffer(payload, dtype="<f8", count=n)
    return data.reshape(c, h, w).astype(np.float64)
