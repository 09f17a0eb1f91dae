"""Static (per-frame appearance) and dynamic (spatio-temporal) visual encoders.

Both take videos shaped (..., T, H, W, C) with values in [0, 1] and return
one D-dim token per frame. They are small conv stacks standing in for
large pretrained backbones; only the input/output contracts matter
downstream.
"""
from __future__ import annotations

import numpy as np

from . import numcore as nc
from .errors import ContractError

TRUNK_CHANNELS = (8, 16)
TEMPORAL_KERNEL = 3
MIN_FRAMES = TEMPORAL_KERNEL
# (window, padding) for the three stride-2 pooling branches; each halves H and W
POOL_BRANCHES = ((2, 0), (4, 1), (8, 3))


def _check_video(video: nc.Tensor) -> None:
    if video.ndim < 4:
        raise ContractError(f"video must be (..., T, H, W, C), got {video.shape}")


def init_static(rng: np.random.Generator, d_model: int = 64, in_channels: int = 1) -> dict[str, nc.Tensor]:
    c1, c2 = TRUNK_CHANNELS
    g = np.sqrt(2.0)
    n_cat = c2 * (1 + len(POOL_BRANCHES))
    return {
        "conv1.w": nc.init_weight(rng, (3, 3, in_channels, c1), 9 * in_channels, g), "conv1.b": nc.zeros(c1),
        "conv2.w": nc.init_weight(rng, (3, 3, c1, c2), 9 * c1, g), "conv2.b": nc.zeros(c2),
        "down.w": nc.init_weight(rng, (3, 3, c2, c2), 9 * c2, g), "down.b": nc.zeros(c2),
        "proj.w": nc.init_weight(rng, (n_cat, d_model), n_cat), "proj.b": nc.zeros(d_model),
    }


def encode_static(video: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """Frame-local encoder: 2-D trunk, then one conv branch plus three
    pooling branches at different scales, channel-concatenated, projected
    to D and max-pooled over space."""
    _check_video(video)
    H, W = video.shape[-3:-1]
    if H < 8 or W < 8 or H % 8 or W % 8:
        raise ContractError(f"static encoder needs H, W to be positive multiples of 8, got {(H, W)}")
    x = nc.relu(nc.conv2d(video, params["conv1.w"], params["conv1.b"], stride=2, padding=1))
    x = nc.relu(nc.conv2d(x, params["conv2.w"], params["conv2.b"], stride=2, padding=1))
    branches = [nc.relu(nc.conv2d(x, params["down.w"], params["down.b"], stride=2, padding=1))]
    for size, pad in POOL_BRANCHES:
        branches.append(nc.avg_pool2d(x, size, stride=2, padding=pad))
    y = nc.linear(nc.concat(branches, axis=-1), params["proj.w"], params["proj.b"])
    lead = y.shape[:-3]
    y = nc.reshape(y, lead + (-1, y.shape[-1]))
    return nc.tmax(y, axis=-2)


def init_dynamic(rng: np.random.Generator, d_model: int = 64, in_channels: int = 1) -> dict[str, nc.Tensor]:
    c1, c2 = TRUNK_CHANNELS
    g = np.sqrt(2.0)
    k = TEMPORAL_KERNEL
    return {
        "conv1.w": nc.init_weight(rng, (3, 3, in_channels, c1), 9 * in_channels, g), "conv1.b": nc.zeros(c1),
        "conv2.w": nc.init_weight(rng, (3, 3, c1, c2), 9 * c1, g), "conv2.b": nc.zeros(c2),
        "mix1.w": nc.init_weight(rng, (k, c2, c2), k * c2, g), "mix1.b": nc.zeros(c2),
        "mix2.w": nc.init_weight(rng, (k, c2, c2), k * c2, g), "mix2.b": nc.zeros(c2),
        "mix3.w": nc.init_weight(rng, (k, c2, d_model), k * c2), "mix3.b": nc.zeros(d_model),
    }


def encode_dynamic(video: nc.Tensor, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """Spatial trunk down to H/8 x W/8, three temporal mixing convs (edge
    padded, T preserved), then max over space. Output row t sees frames t-3 .. t+3."""
    _check_video(video)
    T = video.shape[-4]
    H, W = video.shape[-3:-1]
    if H < 8 or W < 8 or H % 8 or W % 8:
        raise ContractError(f"dynamic encoder needs H, W to be positive multiples of 8, got {(H, W)}")
    if T < MIN_FRAMES:
        raise ContractError(f"dynamic encoder needs at least {MIN_FRAMES} frames, got {T}")
    x = nc.relu(nc.conv2d(video, params["conv1.w"], params["conv1.b"], stride=2, padding=1))
    x = nc.relu(nc.conv2d(x, params["conv2.w"], params["conv2.b"], stride=2, padding=1))
    x = nc.avg_pool2d(x, 2, 2)
    nd = x.ndim
    # (..., T, h, w, C) -> (..., h, w, T, C)
    perm = tuple(range(nd - 4)) + (nd - 3, nd - 2, nd - 4, nd - 1)
    x = nc.transpose(x, perm)
    pad = TEMPORAL_KERNEL // 2
    x = nc.relu(nc.temporal_conv1d(x, params["mix1.w"], params["mix1.b"], padding=pad))
    x = nc.relu(nc.temporal_conv1d(x, params["mix2.w"], params["mix2.b"], padding=pad))
    x = nc.temporal_conv1d(x, params["mix3.w"], params["mix3.b"], padding=pad)
    lead = x.shape[:-4]
    h, w = x.shape[-4], x.shape[-3]
    x = nc.reshape(x, lead + (h * w, T, x.shape[-1]))
    return nc.tmax(x, axis=-3)
