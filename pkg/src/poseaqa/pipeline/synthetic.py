"""Synthetic diving-like clips with known stages, score and splash.

Each clip has three stages (takeoff, flight, entry) with random lengths.
A quality perturbation q in [0, 1] adds per-frame joint noise, tilts the
entry away from vertical and enlarges the splash. Frames are Gaussian blobs
at joint positions plus a splash blob at the water line during entry.

    score  = round(200 * (1 - q)) / 2      (half-point grid, 100 at q = 0)
    splash = SPLASH_BASE + 40 * q
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

FRAMES = 24
SIZE = 32
N_JOINTS = 16
STAGE1_LEN = (5, 9)
STAGE2_LEN = (6, 10)
MIN_LAST = 5
SPLASH_BASE = 10.0
MAX_ENTRY_TILT = np.deg2rad(40.0)
BLOB_SIGMA = 1.0
WATER_Y = 29.0

# body-frame joint templates (x forward, y up, pelvis at origin), MPII order
_STAND = np.array([
    [-1.0, -7.0], [-1.0, -3.5], [-1.0, 0.0], [1.0, 0.0], [1.0, -3.5], [1.0, -7.0], [0.0, 0.0], [0.0, 4.0],
    [0.0, 5.0], [0.0, 7.0], [-2.5, 1.0], [-2.0, 2.5], [-1.5, 4.0], [1.5, 4.0], [2.0, 2.5], [2.5, 1.0],
])
_ARMS_UP = np.array([[-2.0, 9.0], [-2.0, 6.5], [2.0, 6.5], [2.0, 9.0]])  # r_wrist, r_elbow, l_elbow, l_wrist
_TUCK = np.array([
    [1.5, -1.0], [3.0, 2.0], [-0.5, 0.0], [0.5, 0.0], [3.5, 2.5], [2.0, -1.0], [0.0, 0.0], [0.5, 4.0],
    [1.0, 5.0], [2.0, 6.0], [3.0, 2.8], [1.5, 3.0], [0.0, 4.0], [1.0, 4.0], [2.5, 3.5], [3.5, 3.2],
])
_STRAIGHT = np.array([
    [-0.4, -7.0], [-0.4, -3.5], [-0.6, 0.0], [0.6, 0.0], [0.4, -3.5], [0.4, -7.0], [0.0, 0.0], [0.0, 4.0],
    [0.0, 5.0], [0.0, 7.0], [-0.3, 9.5], [-0.5, 7.0], [-1.2, 4.0], [1.2, 4.0], [0.5, 7.0], [0.3, 9.5],
])
_ARM_IDX = [10, 11, 14, 15]


@dataclass
class SyntheticSample:
    sample_id: str
    video: np.ndarray  # (T, H, W, 1) in [0, 1]
    poses: np.ndarray  # (T, 16, 2) pixel coordinates (x, y)
    transitions: tuple[int, int]
    quality: float
    score: float
    splash: float
    splash_areas: np.ndarray  # (T,) rendered splash area per frame, pixels^2


def score_from_quality(q: float) -> float:
    return round(200.0 * (1.0 - q)) / 2.0


def splash_from_quality(q: float) -> float:
    return SPLASH_BASE + 40.0 * q


def _place(template: np.ndarray, angle: float, centre, scale: float) -> np.ndarray:
    """Rotate body coords by ``angle`` (counter-clockwise), flip y to image rows, translate."""
    c, s = np.cos(angle), np.sin(angle)
    rot = template @ np.array([[c, s], [-s, c]])
    out = np.empty_like(rot)
    out[:, 0] = centre[0] + scale * rot[:, 0]
    out[:, 1] = centre[1] - scale * rot[:, 1]
    return out


def clean_trajectory(rng: np.random.Generator, t1: int, t2: int, q: float, T: int = FRAMES):
    """Noise-free joint positions (T, 16, 2) and splash radius per frame."""
    poses = np.zeros((T, N_JOINTS, 2))
    splash_r = np.zeros(T)
    x0 = 9.0 + rng.uniform(-1.5, 1.5)
    spin = rng.uniform(1.3, 1.7) * np.pi
    tilt = MAX_ENTRY_TILT * q * rng.choice([-1.0, 1.0])
    for t in range(T):
        if t < t1:
            u = t / max(t1 - 1, 1)
            tpl = _STAND.copy()
            tpl[_ARM_IDX] = (1 - u) * _STAND[_ARM_IDX] + u * _ARMS_UP
            poses[t] = _place(tpl, 0.0, (x0, 15.0 - 1.5 * np.sin(np.pi * u)), 0.85)
        elif t < t2:
            u = (t - t1) / max(t2 - t1 - 1, 1)
            centre = (x0 + 7.0 * u, 11.0 - 4.0 * np.sin(np.pi * u))
            poses[t] = _place(_TUCK, -spin * u, centre, 0.9)
        else:
            u = (t - t2) / max(T - t2 - 1, 1)
            centre = (x0 + 8.0 + 2.0 * np.sin(tilt), 10.0 + 13.0 * u)
            poses[t] = _place(_STRAIGHT, np.pi + tilt, centre, 0.85)
            splash_r[t] = (1.0 + 0.1 * splash_from_quality(q)) * (0.3 + 0.7 * u)
    return poses, splash_r


def render(poses: np.ndarray, splash_r: np.ndarray, size: int = SIZE) -> np.ndarray:
    """Gaussian blob per joint, plus a flat splash ellipse on the water line."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    T = len(poses)
    video = np.zeros((T, size, size, 1))
    for t in range(T):
        d2 = (xs[None] - poses[t, :, 0, None, None]) ** 2 + (ys[None] - poses[t, :, 1, None, None]) ** 2
        img = np.exp(-d2 / (2 * BLOB_SIGMA ** 2)).sum(axis=0)
        r = splash_r[t]
        if r > 0:
            cx = poses[t, 6, 0]
            img += np.exp(-((xs - cx) ** 2) / (2 * r ** 2) - (ys - WATER_Y) ** 2 / (2 * (0.4 * r + 0.5) ** 2))
        video[t, :, :, 0] = np.clip(img, 0.0, 1.0)
    return video


def make_sample(seed: int, index: int, T: int = FRAMES) -> SyntheticSample:
    rng = np.random.default_rng([seed, index])
    q = float(rng.uniform(0.0, 1.0))
    t1 = int(rng.integers(STAGE1_LEN[0], STAGE1_LEN[1] + 1))
    L2 = int(rng.integers(STAGE2_LEN[0], STAGE2_LEN[1] + 1))
    t2 = t1 + L2
    if T - t2 < MIN_LAST:
        raise ContractError(f"{T} frames too short for the stage layout")
    clean, splash_r = clean_trajectory(rng, t1, t2, q, T)
    poses = clean + rng.normal(0.0, 0.15 + 1.2 * q, clean.shape)
    video = render(poses, splash_r)
    video = np.round(video * 255.0) / 255.0
    return SyntheticSample(
        sample_id=f"s{index:05d}", video=video, poses=poses, transitions=(t1, t2), quality=q,
        score=score_from_quality(q), splash=splash_from_quality(q),
        splash_areas=np.pi * splash_r * (0.4 * splash_r + 0.5),
    )


def generate_synthetic(seed: int, n: int) -> list[SyntheticSample]:
    if n < 2:
        raise ContractError(f"need at least 2 samples, got {n}")
    return [make_sample(seed, i) for i in range(n)]
