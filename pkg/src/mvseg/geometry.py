"""Pinhole camera model, SE(3) rigid transforms and warp-grid construction.

Conventions used by every caller of this module:

- Camera frame: x right, y down, z forward (optical axis). Depth is the
  z-coordinate in the camera frame, in meters; 0 or non-finite depth means
  missing.
- Pixel centers sit at integer coordinates. Normalized grid coordinates map
  the pixel-center corners to exactly +-1: ``u = 2*x/(W-1) - 1``.
- A warp grid is indexed by TARGET pixels, is built from the TARGET view's
  depth, and points into the SOURCE view, so that sampling a source map
  through the grid synthesizes the target view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mvseg.core import InvalidDepthError, ShapeError

MAX_DEPTH = 100.0  # meters; anything at or beyond this is treated as missing


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ShapeError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ShapeError(
                f"principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform: p' = rotation @ p + translation."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ShapeError(f"rotation must be 3x3, got {r.shape}")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-9:
            raise ShapeError("rotation is not orthonormal to 1e-9")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ShapeError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity():
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points):
        """Transform points of shape (3,) or (3, N)."""
        p = np.asarray(points, dtype=np.float64)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return self.rotation @ p + self.translation[:, None]


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return the transform applying b first, then a."""
    return RigidTransform(a.rotation @ b.rotation,
                          a.rotation @ b.translation + a.translation)


def invert(a: RigidTransform) -> RigidTransform:
    return RigidTransform(a.rotation.T, -(a.rotation.T @ a.translation))


def backproject(x, z, k: CameraIntrinsics):
    """Lift pixel coordinates (x, y) at depth z to a 3D camera-frame point."""
    if z <= 0:
        raise InvalidDepthError(f"depth must be positive, got {z}")
    px, py = float(x[0]), float(x[1])
    return np.array([z * (px - k.cx) / k.fx, z * (py - k.cy) / k.fy, z])


def project(p, k: CameraIntrinsics):
    """Project a 3D camera-frame point to pixel coordinates.

    The caller must handle p.z <= 0 (behind the camera) by marking the
    pixel invalid; this function raises for scalar misuse.
    """
    p = np.asarray(p, dtype=np.float64)
    if p[2] <= 0:
        raise InvalidDepthError(f"point behind camera, z={p[2]}")
    return np.array([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])


def valid_depth_mask(depth):
    d = np.asarray(depth, dtype=np.float64)
    return np.isfinite(d) & (d > 0) & (d < MAX_DEPTH)


def warp_points(depth, pose: RigidTransform, k: CameraIntrinsics):
    """Warp every pixel of a depth map into another camera view.

    For each pixel x with valid depth Z(x), computes
    T * backproject(x, Z(x)) and projects it into the other view.

    Returns (xw, yw, zw, valid): unnormalized warped pixel coordinates,
    the warped point's depth in the destination frame, and a validity
    mask that is False where depth is missing or the warped point lies at
    or behind the destination camera (zw <= 0). Frustum bounds are NOT
    applied here; see compute_warp_grid.
    """
    d = np.asarray(depth, dtype=np.float64)
    if d.ndim != 2:
        raise ShapeError(f"depth must be (H, W), got shape {d.shape}")
    h, w = d.shape
    valid = valid_depth_mask(d)

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    # Backproject all pixels at once; invalid depths ride along and are
    # masked afterwards.
    z = np.where(valid, d, 1.0)
    px = z * (xs - k.cx) / k.fx
    py = z * (ys - k.cy) / k.fy
    pts = np.stack([px.ravel(), py.ravel(), z.ravel()])
    warped = pose.apply(pts)
    zw = warped[2].reshape(h, w)
    in_front = zw > 0
    zs = np.where(in_front, zw, 1.0)
    xw = (k.fx * warped[0].reshape(h, w) / zs + k.cx)
    yw = (k.fy * warped[1].reshape(h, w) / zs + k.cy)
    valid = valid & in_front
    return xw, yw, zw, valid


@dataclass
class WarpGrid:
    """Per-pixel normalized source coordinates in [-1, 1]^2 plus validity.

    ``u``/``v`` address the source image's x/y axes; entries where
    ``valid`` is False carry coordinate 0 and must be ignored.
    """

    u: np.ndarray  # (H, W) float64
    v: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool

    @property
    def shape(self):
        return self.u.shape

    @staticmethod
    def identity(h, w):
        """Grid mapping every pixel to itself."""
        u = np.tile(normalize_coords(np.arange(w, dtype=np.float64), w), (h, 1))
        v = np.tile(normalize_coords(np.arange(h, dtype=np.float64), h)[:, None], (1, w))
        return WarpGrid(u, v, np.ones((h, w), dtype=bool))


def normalize_coords(x, size):
    """Map pixel coordinates [0, size-1] to canonical [-1, 1]."""
    return 2.0 * np.asarray(x, dtype=np.float64) / (size - 1) - 1.0


def unnormalize_coords(u, size):
    """Inverse of :func:`normalize_coords`."""
    return (np.asarray(u, dtype=np.float64) + 1.0) * (size - 1) / 2.0


def compute_warp_grid(depth_target, pose_target_to_source: RigidTransform,
                      k: CameraIntrinsics) -> WarpGrid:
    """Build the warp grid from target pixels into the source view.

    A grid entry is valid only when the target depth is present, the warped
    point lands strictly in front of the source camera, and the warped pixel
    falls inside the source frustum (normalized coordinates in [-1, 1]^2).
    Invalid entries carry coordinate 0.
    """
    d = np.asarray(depth_target, dtype=np.float64)
    if d.shape != (k.height, k.width):
        raise ShapeError(
            f"depth shape {d.shape} does not match intrinsics "
            f"{k.height}x{k.width}"
        )
    xw, yw, _, valid = warp_points(d, pose_target_to_source, k)
    inside = (xw >= 0) & (xw <= k.width - 1) & (yw >= 0) & (yw <= k.height - 1)
    valid = valid & inside
    u = np.where(valid, normalize_coords(xw, k.width), 0.0)
    v = np.where(valid, normalize_coords(yw, k.height), 0.0)
    return WarpGrid(u, v, valid)


def downsample_grid(grid: WarpGrid, levels: int):
    """Average-pool a warp grid ``levels`` times by factors of 2.

    Returns a list [level 1, ..., level ``levels``]; level l has shape
    (H/2^l, W/2^l). Coordinates are 2x2 block averages (normalized
    coordinates are resolution-independent); a pooled entry is valid only
    if all four members of its block are valid, since averaging
    coordinates across a validity edge is meaningless.
    """
    h, w = grid.shape
    if levels < 0:
        raise ShapeError(f"levels must be >= 0, got {levels}")
    if h % (1 << levels) or w % (1 << levels):
        raise ShapeError(
            f"grid shape {h}x{w} not divisible by 2^{levels}"
        )
    out = []
    u, v, valid = grid.u, grid.v, grid.valid
    for _ in range(levels):
        hh, ww = u.shape[0] // 2, u.shape[1] // 2
        ub = u.reshape(hh, 2, ww, 2)
        vb = v.reshape(hh, 2, ww, 2)
        mb = valid.reshape(hh, 2, ww, 2)
        valid = mb.all(axis=(1, 3))
        u = np.where(valid, ub.mean(axis=(1, 3)), 0.0)
        v = np.where(valid, vb.mean(axis=(1, 3)), 0.0)
        out.append(WarpGrid(u, v, valid))
    return out
