"""Pose annotation helpers: nearest-box subject tracking, joint gap
interpolation, splash-area integration, a pluggable pose-estimator stub and
the per-frame pose CSV format."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import ContractError, FormatError, NoEstimatorError
from .skeleton import JOINT_NAMES

N_JOINTS = len(JOINT_NAMES)
CONFIDENCE_FLOOR = 0.3


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ContractError(f"box corners out of order: ({self.x1}, {self.y1}, {self.x2}, {self.y2})")
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractError(f"confidence {self.confidence} outside [0, 1]")

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy, self.confidence)


def box_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Euclidean distance over both corners taken together."""
    return math.sqrt((a.x1 - b.x1) ** 2 + (a.y1 - b.y1) ** 2 + (a.x2 - b.x2) ** 2 + (a.y2 - b.y2) ** 2)


@dataclass(frozen=True)
class TrackResult:
    index: int | None  # None when the subject is lost
    box: BoundingBox | None
    distance: float

    @property
    def lost(self) -> bool:
        return self.index is None


def track_nearest(prev: BoundingBox, candidates: Sequence[BoundingBox], floor: float = CONFIDENCE_FLOOR) -> TrackResult:
    """Closest confident candidate; ties go to higher confidence, then lower index."""
    if len(candidates) == 0:
        raise ContractError("no candidate boxes")
    best = None
    for i, c in enumerate(candidates):
        if c.confidence < floor:
            continue
        key = (box_distance(prev, c), -c.confidence, i)
        if best is None or key < best:
            best = key
    if best is None:
        return TrackResult(None, None, math.inf)
    d, _, i = best
    return TrackResult(i, candidates[i], d)


def track_sequence(first: BoundingBox, per_frame: Sequence[Sequence[BoundingBox]],
                   floor: float = CONFIDENCE_FLOOR) -> list[TrackResult]:
    """Track through frames; a lost frame keeps the last confirmed box as reference."""
    prev = first
    out = []
    for cands in per_frame:
        r = track_nearest(prev, cands, floor) if cands else TrackResult(None, None, math.inf)
        if not r.lost:
            prev = r.box
        out.append(r)
    return out


def interpolate_joints(p_i, i: int, p_j, j: int, k: int, printed_coefficients: bool = False) -> np.ndarray:
    """Linear interpolation of joint coordinates at frame k between frames i < k < j.

    ``printed_coefficients`` swaps the two weights, which returns p_j near
    frame i; it is kept only for comparison against annotations produced
    that way.
    """
    if not i < k < j:
        raise ContractError(f"interpolation frame {k} not strictly between {i} and {j}")
    p_i, p_j = np.asarray(p_i, dtype=np.float64), np.asarray(p_j, dtype=np.float64)
    if p_i.shape != p_j.shape:
        raise ContractError(f"endpoint shapes differ: {p_i.shape} vs {p_j.shape}")
    if not (np.all(np.isfinite(p_i)) and np.all(np.isfinite(p_j))):
        raise ContractError("interpolation endpoints must be valid poses")
    wi, wj = (j - k) / (j - i), (k - i) / (j - i)
    if printed_coefficients:
        wi, wj = wj, wi
    return p_i * wi + p_j * wj


def fill_missing(poses: np.ndarray, printed_coefficients: bool = False) -> np.ndarray:
    """Fill frames whose joints are NaN from the nearest valid frames on each side.

    Gaps touching the start or end of the clip copy the nearest valid frame.
    """
    poses = np.array(poses, dtype=np.float64)
    valid = np.all(np.isfinite(poses.reshape(len(poses), -1)), axis=1)
    idx = np.flatnonzero(valid)
    if idx.size == 0:
        raise ContractError("no valid pose frame to interpolate from")
    for k in np.flatnonzero(~valid):
        before, after = idx[idx < k], idx[idx > k]
        if before.size and after.size:
            i, j = before[-1], after[0]
            poses[k] = interpolate_joints(poses[i], i, poses[j], j, k, printed_coefficients)
        else:
            poses[k] = poses[before[-1] if before.size else after[0]]
    return poses


@dataclass
class SplashTrack:
    areas: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        self.areas = np.asarray(self.areas, dtype=np.float64).ravel()
        if self.areas.size < 1:
            raise ContractError("splash track needs at least one frame")
        if np.any(self.areas < 0) or not np.all(np.isfinite(self.areas)):
            raise ContractError("splash areas must be finite and non-negative")
        if not self.dt > 0:
            raise ContractError(f"frame interval must be positive, got {self.dt}")


def integrate_splash(track: SplashTrack) -> float:
    """Trapezoidal area under s(t)."""
    a = track.areas
    return float(np.sum((a[:-1] + a[1:]) * 0.5) * track.dt)


# -- pose estimation stub -----------------------------------------------------

class PoseEstimator(Protocol):
    def estimate(self, crops: list[np.ndarray], boxes: Sequence[BoundingBox]) -> np.ndarray:
        """(T, 16, 2) full-frame joint coordinates; rows of NaN mark frames it missed."""


@dataclass
class ReplayEstimator:
    """Returns stored poses plus seeded Gaussian noise; ``drop`` frames come back missing."""

    poses: np.ndarray
    sigma: float = 0.0
    seed: int = 0
    drop: frozenset[int] = field(default_factory=frozenset)

    def estimate(self, crops, boxes):
        out = np.array(self.poses, dtype=np.float64)
        if len(crops) != len(out):
            raise ContractError(f"{len(crops)} crops for {len(out)} stored poses")
        if self.sigma > 0:
            out = out + np.random.default_rng(self.seed).normal(0.0, self.sigma, out.shape)
        for k in self.drop:
            out[k] = np.nan
        return out


def crop(frame: np.ndarray, box: BoundingBox) -> np.ndarray:
    H, W = frame.shape[:2]
    if box.x1 < 0 or box.y1 < 0 or box.x2 > W or box.y2 > H:
        raise ContractError(f"crop box {box} outside a {W}x{H} frame")
    return frame[int(math.floor(box.y1)):int(math.ceil(box.y2)), int(math.floor(box.x1)):int(math.ceil(box.x2))]


def estimate_pose_stub(frames: np.ndarray, boxes: Sequence[BoundingBox], backend: PoseEstimator | None,
                       printed_coefficients: bool = False) -> np.ndarray:
    """Crop each frame to its subject box, delegate to ``backend``, fill missed frames."""
    if backend is None:
        raise NoEstimatorError("no pose estimator backend configured")
    if len(frames) != len(boxes):
        raise ContractError(f"{len(frames)} frames but {len(boxes)} boxes")
    crops = [crop(f, b) for f, b in zip(frames, boxes)]
    poses = np.asarray(backend.estimate(crops, boxes), dtype=np.float64)
    if poses.shape != (len(frames), N_JOINTS, 2):
        raise ContractError(f"estimator returned shape {poses.shape}, expected {(len(frames), N_JOINTS, 2)}")
    return fill_missing(poses, printed_coefficients)


# -- pose file format -----------------------------------------------------------

@dataclass
class PoseAnnotation:
    frame: int
    keypoints: np.ndarray  # (16, 2) pixels
    visible: np.ndarray  # (16,) bool
    box: BoundingBox

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.keypoints.shape != (N_JOINTS, 2) or self.visible.shape != (N_JOINTS,):
            raise ContractError(f"expected {N_JOINTS} keypoints, got {self.keypoints.shape}")

    def check_in_frame(self, width: float, height: float) -> None:
        kp = self.keypoints[self.visible]
        if np.any(kp < 0) or np.any(kp[:, 0] > width) or np.any(kp[:, 1] > height):
            raise ContractError(f"frame {self.frame}: visible keypoint outside {width}x{height}")


POSE_HEADER = (["frame"] + [f"{n}_{c}" for n in JOINT_NAMES for c in ("x", "y", "v")]
               + ["x1", "y1", "x2", "y2", "conf"])


def write_pose_csv(path, annotations: Sequence[PoseAnnotation]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POSE_HEADER)
        for a in annotations:
            row = [str(a.frame)]
            for (x, y), v in zip(a.keypoints, a.visible):
                row += [repr(float(x)), repr(float(y)), "1" if v else "0"]
            b = a.box
            row += [repr(float(t)) for t in (b.x1, b.y1, b.x2, b.y2, b.confidence)]
            w.writerow(row)


def read_pose_csv(path) -> list[PoseAnnotation]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read pose file {path}: {e}") from e
    if not rows or rows[0] != POSE_HEADER:
        raise FormatError(f"{path}: missing or unexpected pose header")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(POSE_HEADER):
            raise FormatError(f"{path}:{n}: expected {len(POSE_HEADER)} fields, got {len(row)}")
        try:
            vals = [float(x) for x in row[1:]]
            frame = int(row[0])
        except ValueError as e:
            raise FormatError(f"{path}:{n}: {e}") from e
        joints = np.array(vals[:3 * N_JOINTS]).reshape(N_JOINTS, 3)
        try:
            out.append(PoseAnnotation(frame, joints[:, :2], joints[:, 2] != 0, BoundingBox(*vals[3 * N_JOINTS:])))
        except ContractError as e:
            raise FormatError(f"{path}:{n}: {e}") from e
    return out


def poses_to_annotations(poses: np.ndarray, boxes: Sequence[BoundingBox] | None = None) -> list[PoseAnnotation]:
    """Wrap a (T, 16, 2) array; boxes default to the tight joint bounds padded by one pixel."""
    out = []
    for t, p in enumerate(np.asarray(poses, dtype=np.float64)):
        if boxes is not None:
            b = boxes[t]
        else:
            lo, hi = p.min(axis=0), p.max(axis=0)
            b = BoundingBox(lo[0] - 1, lo[1] - 1, hi[0] + 1, hi[1] + 1, 1.0)
        out.append(PoseAnnotation(t, p, np.ones(N_JOINTS, dtype=bool), b))
    return out


def read_boxes_csv(path) -> dict[int, list[BoundingBox]]:
    """Candidate boxes per frame from ``frame,x1,y1,x2,y2,conf`` rows."""
    table: dict[int, list[BoundingBox]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read box file {path}: {e}") from e
    if not rows or [c.strip() for c in rows[0]] != ["frame", "x1", "y1", "x2", "y2", "conf"]:
        raise FormatError(f"{path}: expected header frame,x1,y1,x2,y2,conf")
    for n, row in enumerate(rows[1:], start=2):
        try:
            f = int(row[0])
            table.setdefault(f, []).append(BoundingBox(*map(float, row[1:6])))
        except (ValueError, IndexError, TypeError, ContractError) as e:
            raise FormatError(f"{path}:{n}: {e}") from e
    return table


def read_splash_csv(path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read splash file {path}: {e}") from e
    if not rows or [c.strip() for c in rows[0]] != ["frame", "area"]:
        raise FormatError(f"{path}: expected header frame,area")
    try:
        pairs = sorted((int(r[0]), float(r[1])) for r in rows[1:])
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}: {e}") from e
    return np.array([a for _, a in pairs])


def write_rows(path: Path | str, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
