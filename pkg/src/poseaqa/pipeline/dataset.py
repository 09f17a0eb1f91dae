"""On-disk dataset layout and in-memory arrays.

A dataset directory holds

    manifest.csv   sample_id,split,score,splash,quality,t1,t2
    videos.npy     uint8 (N, T, H, W, 1)
    poses/<sample_id>.csv   per-frame pose records (annotation format)

Stage transitions in the manifest are the generator's three-stage layout;
``stage_transitions`` derives the K-stage ground truth used by a run.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import annotation as ann
from ..errors import ContractError, FormatError
from .synthetic import SyntheticSample

MANIFEST_HEADER = ["sample_id", "split", "score", "splash", "quality", "t1", "t2"]
TRAIN_FRACTION = 0.8


@dataclass
class Dataset:
    ids: list[str]
    split: np.ndarray  # "train" / "test" per sample
    videos: np.ndarray  # uint8 (N, T, H, W, 1)
    poses: np.ndarray  # (N, T, 16, 2) pixels
    transitions: np.ndarray  # (N, 2) three-stage layout
    scores: np.ndarray
    splash: np.ndarray
    quality: np.ndarray

    def __len__(self):
        return len(self.ids)

    @property
    def n_frames(self) -> int:
        return self.videos.shape[1]

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def index_of(self, sample_id: str) -> int:
        try:
            return self.ids.index(sample_id)
        except ValueError:
            raise ContractError(f"unknown sample id {sample_id!r}") from None

    def video_batch(self, idx) -> np.ndarray:
        return self.videos[np.asarray(idx)].astype(np.float64) / 255.0

    def pose_batch(self, idx) -> np.ndarray:
        """Coordinates scaled to [-1, 1] over the frame."""
        half = self.videos.shape[2] / 2.0
        return (self.poses[np.asarray(idx)] - half) / half

    def stage_transitions(self, idx, n_stages: int) -> np.ndarray:
        return stage_transitions(self.transitions[np.asarray(idx)], n_stages)


def stage_transitions(three_stage: np.ndarray, n_stages: int) -> np.ndarray:
    """K=3 keeps both transitions; K=2 keeps the entry transition; K=1 has none."""
    t = np.asarray(three_stage)
    if n_stages == 3:
        return t
    if n_stages == 2:
        return t[..., 1:]
    if n_stages == 1:
        return t[..., :0]
    raise ContractError(f"synthetic data supports 1 to 3 stages, got {n_stages}")


def split_ids(n: int, seed: int, train_fraction: float = TRAIN_FRACTION) -> np.ndarray:
    perm = np.random.default_rng([seed, 0xA11]).permutation(n)
    n_train = int(round(train_fraction * n))
    split = np.empty(n, dtype=object)
    split[perm[:n_train]] = "train"
    split[perm[n_train:]] = "test"
    return split.astype(str)


def from_samples(samples: list[SyntheticSample], seed: int) -> Dataset:
    return Dataset(
        ids=[s.sample_id for s in samples],
        split=split_ids(len(samples), seed),
        videos=np.stack([np.round(s.video * 255.0).astype(np.uint8) for s in samples]),
        poses=np.stack([s.poses for s in samples]),
        transitions=np.array([s.transitions for s in samples], dtype=np.int64),
        scores=np.array([s.score for s in samples]),
        splash=np.array([s.splash for s in samples]),
        quality=np.array([s.quality for s in samples]),
    )


def save_dataset(ds: Dataset, out) -> None:
    out = Path(out)
    (out / "poses").mkdir(parents=True, exist_ok=True)
    with open(out / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for i, sid in enumerate(ds.ids):
            w.writerow([sid, ds.split[i], repr(float(ds.scores[i])), repr(float(ds.splash[i])),
                        repr(float(ds.quality[i])), int(ds.transitions[i, 0]), int(ds.transitions[i, 1])])
    np.save(out / "videos.npy", ds.videos)
    for i, sid in enumerate(ds.ids):
        ann.write_pose_csv(out / "poses" / f"{sid}.csv", ann.poses_to_annotations(ds.poses[i]))


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with open(path / "manifest.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        videos = np.load(path / "videos.npy")
    except (OSError, ValueError, UnicodeDecodeError) as e:
        raise FormatError(f"cannot read dataset at {path}: {e}") from e
    if not rows or rows[0] != MANIFEST_HEADER:
        raise FormatError(f"{path}/manifest.csv: expected header {','.join(MANIFEST_HEADER)}")
    body = rows[1:]
    if videos.dtype != np.uint8 or videos.ndim != 5 or len(videos) != len(body):
        raise FormatError(f"{path}/videos.npy: expected uint8 (N, T, H, W, 1) with N = {len(body)}")
    try:
        ids = [r[0] for r in body]
        split = np.array([r[1] for r in body])
        scores = np.array([float(r[2]) for r in body])
        splash = np.array([float(r[3]) for r in body])
        quality = np.array([float(r[4]) for r in body])
        transitions = np.array([[int(r[5]), int(r[6])] for r in body], dtype=np.int64)
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}/manifest.csv: {e}") from e
    if not set(split) <= {"train", "test"}:
        raise FormatError(f"{path}/manifest.csv: split must be train or test")
    poses = []
    for sid in ids:
        recs = ann.read_pose_csv(path / "poses" / f"{sid}.csv")
        poses.append(np.stack([r.keypoints for r in sorted(recs, key=lambda r: r.frame)]))
    poses = np.stack(poses)
    if poses.shape[:2] != videos.shape[:2]:
        raise FormatError(f"{path}: pose frames {poses.shape[:2]} do not match videos {videos.shape[:2]}")
    return Dataset(ids, split, videos, poses, transitions, scores, splash, quality)

