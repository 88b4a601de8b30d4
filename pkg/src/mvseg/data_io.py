"""Sequence loading and storage: images, depth, labels, trajectories, manifests.

Formats (chosen for bit-exactness and wide tooling support):

- depth:     binary PGM (P5), maxval 65535, big-endian 16-bit millimeters,
             0 = missing
- labels:    binary PGM (P5), maxval 255, value 255 = unlabeled (IGNORE)
- rgb:       binary PPM (P6), maxval 255, scaled to [0, 1] on load
- trajectory: text, one "timestamp tx ty tz qx qy qz qw" line per pose,
             camera-to-world, '#' comments allowed
- intrinsics: text, one line "fx fy cx cy width height"
- manifest:  text key-value file, grammar documented on load_manifest
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from mvseg.core import (
    IGNORE_LABEL,
    AssociationError,
    FormatError,
    as_tensor,
)
from mvseg.geometry import CameraIntrinsics, RigidTransform, compose, invert

TIMESTAMP_TOLERANCE = 0.02  # seconds; half a frame at 30 Hz


# ---------------------------------------------------------------------------
# Netpbm images


def _read_pnm_header(f, path, magic_wanted):
    """Parse a PNM header, honoring whitespace and '#' comments."""

    def next_token():
        tok = b""
        while True:
            ch = f.read(1)
            if not ch:
                raise FormatError(f"{path}: truncated header")
            if ch == b"#":
                while ch not in (b"\n", b""):
                    ch = f.read(1)
                continue
            if ch.isspace():
                if tok:
                    return tok
                continue
            tok += ch

    magic = next_token()
    if magic != magic_wanted:
        raise FormatError(
            f"{path}: bad magic {magic!r}, expected {magic_wanted!r}"
        )
    width = int(next_token())
    height = int(next_token())
    maxval = int(next_token())
    return width, height, maxval


def _read_payload(f, path, nbytes):
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise FormatError(
            f"{path}: truncated payload, got {len(data)} of {nbytes} bytes"
        )
    return data


def load_depth(path):
    """Load a 16-bit PGM depth image; millimeter values become meters."""
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, path, b"P5")
        if maxval != 65535:
            raise FormatError(f"{path}: depth PGM must have maxval 65535, got {maxval}")
        raw = _read_payload(f, path, 2 * w * h)
    mm = np.frombuffer(raw, dtype=">u2").reshape(h, w)
    return mm.astype(np.float64) / 1000.0


def save_depth(path, depth_m):
    """Write depth in meters as 16-bit millimeter PGM; non-finite or
    non-positive values are stored as 0 (missing)."""
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.where(np.isfinite(d) & (d > 0), np.round(d * 1000.0), 0.0)
    mm = np.clip(mm, 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n65535\n" % (d.shape[1], d.shape[0]))
        f.write(mm.tobytes())


def load_labels(path):
    """Load an 8-bit PGM label image; 255 means IGNORE."""
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, path, b"P5")
        if maxval != 255:
            raise FormatError(f"{path}: label PGM must have maxval 255, got {maxval}")
        raw = _read_payload(f, path, w * h)
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(np.int32)


def save_labels(path, labels):
    lab = np.asarray(labels)
    if ((lab != IGNORE_LABEL) & ((lab < 0) | (lab > 254))).any():
        raise FormatError("labels outside [0, 254] cannot be stored as 8-bit PGM")
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (lab.shape[1], lab.shape[0]))
        f.write(lab.astype(np.uint8).tobytes())


def load_rgb(path):
    """Load a binary PPM as a (3, H, W) tensor scaled to [0, 1]."""
    with open(path, "rb") as f:
        w, h, maxval = _read_pnm_header(f, path, b"P6")
        if maxval != 255:
            raise FormatError(f"{path}: rgb PPM must have maxval 255, got {maxval}")
        raw = _read_payload(f, path, 3 * w * h)
    img = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
    return img.transpose(2, 0, 1).astype(np.float64) / 255.0


def save_rgb(path, rgb):
    t = as_tensor(rgb)
    img = np.clip(np.round(t * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (t.shape[2], t.shape[1]))
        f.write(img.transpose(1, 2, 0).tobytes())


# ---------------------------------------------------------------------------
# Trajectories


@dataclass
class TrajectoryEntry:
    """One camera-to-world pose sample: where the camera sits in the world."""

    timestamp: float
    translation: np.ndarray  # (3,) meters
    quaternion: np.ndarray  # (qx, qy, qz, qw), unit norm

    def to_transform(self) -> RigidTransform:
        """Camera-to-world rigid transform."""
        rot = Rotation.from_quat(self.quaternion).as_matrix()
        return RigidTransform(rot, self.translation)

    @staticmethod
    def from_transform(timestamp, pose_cam_to_world: RigidTransform):
        q = Rotation.from_matrix(pose_cam_to_world.rotation).as_quat()
        return TrajectoryEntry(float(timestamp),
                               pose_cam_to_world.translation.copy(), q)


def load_trajectory(path):
    """Parse a trajectory text file into a list of TrajectoryEntry.

    Quaternions are renormalized on load (and rejected if further than
    1e-6 from unit norm); timestamps must be strictly increasing.
    """
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise FormatError(
                    f"{path}:{lineno}: expected 8 fields "
                    f"'timestamp tx ty tz qx qy qz qw', got {len(parts)}"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            t = vals[0]
            trans = np.array(vals[1:4])
            quat = np.array(vals[4:8])
            norm = np.linalg.norm(quat)
            if abs(norm - 1.0) > 1e-6:
                raise FormatError(
                    f"{path}:{lineno}: quaternion norm {norm:.8f} too far from 1"
                )
            if entries and t <= entries[-1].timestamp:
                raise FormatError(
                    f"{path}:{lineno}: timestamps must be strictly increasing"
                )
            entries.append(TrajectoryEntry(t, trans, quat / norm))
    return entries


def save_trajectory(path, entries):
    with open(path, "w") as f:
        f.write("# timestamp tx ty tz qx qy qz qw\n")
        for e in entries:
            fields = [e.timestamp, *e.translation, *e.quaternion]
            f.write(" ".join(f"{v:.9f}" for v in fields) + "\n")


def _nearest_entry(entries, t, path_hint=""):
    best = min(entries, key=lambda e: abs(e.timestamp - t), default=None)
    if best is None or abs(best.timestamp - t) > TIMESTAMP_TOLERANCE:
        raise AssociationError(
            f"no trajectory entry within {TIMESTAMP_TOLERANCE}s of t={t}"
            + (f" in {path_hint}" if path_hint else "")
        )
    return best


def relative_pose(entries, t_from, t_to) -> RigidTransform:
    """Pose mapping points from the 'from' camera frame to the 'to' frame.

    Both timestamps are matched to the nearest trajectory entry within
    TIMESTAMP_TOLERANCE. The result is inverse(pose_to) ∘ pose_from.
    """
    pose_from = _nearest_entry(entries, t_from).to_transform()
    pose_to = _nearest_entry(entries, t_to).to_transform()
    return compose(invert(pose_to), pose_from)


# ---------------------------------------------------------------------------
# Intrinsics


def load_intrinsics(path) -> CameraIntrinsics:
    """Read a one-line 'fx fy cx cy width height' text file."""
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(
                    f"{path}:{lineno}: expected 'fx fy cx cy width height'"
                )
            fx, fy, cx, cy = (float(p) for p in parts[:4])
            w, h = int(parts[4]), int(parts[5])
            return CameraIntrinsics(fx, fy, cx, cy, w, h)
    raise FormatError(f"{path}: no intrinsics line found")


def save_intrinsics(path, k: CameraIntrinsics):
    with open(path, "w") as f:
        f.write(f"{k.fx:.9f} {k.fy:.9f} {k.cx:.9f} {k.cy:.9f} {k.width} {k.height}\n")


# ---------------------------------------------------------------------------
# Sequence manifests


@dataclass
class FrameRecord:
    frame_id: str
    time: float
    rgb: str
    depth: str
    label: str | None = None


@dataclass
class SequenceManifest:
    """One annotated keyframe plus its ordered tracked neighbor frames.

    Grammar (one statement per line, paths relative to the manifest file,
    '#' comments allowed):

        intrinsics <path>
        trajectory <path>
        keyframe <frame-id>
        frame <frame-id> time <seconds> rgb <path> depth <path> [label <path>]

    Neighbor order is the file order of the ``frame`` lines, which is
    expected to be by increasing trajectory distance from the keyframe.
    """

    root: str
    intrinsics_path: str
    trajectory_path: str
    keyframe_id: str
    frames: dict = field(default_factory=dict)  # id -> FrameRecord
    neighbor_ids: list = field(default_factory=list)

    def path(self, rel):
        return os.path.join(self.root, rel)

    @property
    def keyframe(self) -> FrameRecord:
        return self.frames[self.keyframe_id]


def load_manifest(path) -> SequenceManifest:
    root = os.path.dirname(os.path.abspath(path))
    intrinsics_path = None
    trajectory_path = None
    keyframe_id = None
    frames = {}
    order = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind = parts[0]
            try:
                if kind == "intrinsics":
                    intrinsics_path = parts[1]
                elif kind == "trajectory":
                    trajectory_path = parts[1]
                elif kind == "keyframe":
                    keyframe_id = parts[1]
                elif kind == "frame":
                    rec = FrameRecord(frame_id=parts[1], time=0.0, rgb="", depth="")
                    kv = parts[2:]
                    if len(kv) % 2:
                        raise FormatError(
                            f"{path}:{lineno}: dangling key in frame record"
                        )
                    for key, val in zip(kv[::2], kv[1::2]):
                        if key == "time":
                            rec.time = float(val)
                        elif key in ("rgb", "depth", "label"):
                            setattr(rec, key, val)
                        else:
                            raise FormatError(
                                f"{path}:{lineno}: unknown frame key {key!r}"
                            )
                    if not rec.rgb or not rec.depth:
                        raise FormatError(
                            f"{path}:{lineno}: frame needs rgb and depth paths"
                        )
                    frames[rec.frame_id] = rec
                    order.append(rec.frame_id)
                else:
                    raise FormatError(f"{path}:{lineno}: unknown statement {kind!r}")
            except IndexError:
                raise FormatError(f"{path}:{lineno}: missing argument") from None
    if intrinsics_path is None or keyframe_id is None:
        raise FormatError(f"{path}: manifest needs intrinsics and keyframe lines")
    if keyframe_id not in frames:
        raise FormatError(f"{path}: keyframe {keyframe_id!r} has no frame record")
    if frames[keyframe_id].label is None:
        raise FormatError(f"{path}: keyframe {keyframe_id!r} must carry a label file")
    return SequenceManifest(
        root=root,
        intrinsics_path=intrinsics_path,
        trajectory_path=trajectory_path,
        keyframe_id=keyframe_id,
        frames=frames,
        neighbor_ids=[i for i in order if i != keyframe_id],
    )


def save_manifest(path, manifest: SequenceManifest):
    with open(path, "w") as f:
        f.write(f"intrinsics {manifest.intrinsics_path}\n")
        if manifest.trajectory_path:
            f.write(f"trajectory {manifest.trajectory_path}\n")
        f.write(f"keyframe {manifest.keyframe_id}\n")
        for fid in [manifest.keyframe_id] + manifest.neighbor_ids:
            rec = manifest.frames[fid]
            line = f"frame {rec.frame_id} time {rec.time:.6f} rgb {rec.rgb} depth {rec.depth}"
            if rec.label:
                line += f" label {rec.label}"
            f.write(line + "\n")
