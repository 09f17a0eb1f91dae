"""Hierarchical skeletal encoder over the 16-joint MPII skeleton.

Joints are split into three levels (torso, inner limbs, outer limbs). Each
level runs a three-subset graph convolution (identity / centripetal /
centrifugal adjacency), and an EdgeConv over the temporally averaged joint
features links each level to its neighbouring levels. Level outputs are
summed and joint-mean pooled into one token per frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ContractError, StructureError

JOINT_NAMES = (
    "r_ankle", "r_knee", "r_hip", "l_hip", "l_knee", "l_ankle", "pelvis", "thorax",
    "upper_neck", "head_top", "r_wrist", "r_elbow", "r_shoulder", "l_shoulder", "l_elbow", "l_wrist",
)
MPII_PARENT = (1, 2, 6, 6, 3, 4, -1, 6, 7, 8, 11, 12, 7, 7, 13, 14)
PELVIS, THORAX = 6, 7
SUBSETS = ("identity", "centripetal", "centrifugal")
N_LEVELS = 3


@dataclass(frozen=True)
class SkeletonGraph:
    parent: tuple[int, ...] = MPII_PARENT
    names: tuple[str, ...] = JOINT_NAMES

    @property
    def joint_count(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return self.parent.index(-1)

    def edges(self) -> list[tuple[int, int]]:
        """(child, parent) pairs."""
        return [(c, p) for c, p in enumerate(self.parent) if p >= 0]

    def children(self, j: int) -> list[int]:
        return [c for c, p in enumerate(self.parent) if p == j]

    def validate(self) -> None:
        J = self.joint_count
        roots = [j for j, p in enumerate(self.parent) if p == -1]
        if len(roots) != 1:
            raise StructureError(f"expected exactly one root, found {roots}")
        if any(not (-1 <= p < J) or p == j for j, p in enumerate(self.parent)):
            raise StructureError("parent index out of range or self-parented joint")
        for j in range(J):
            seen, cur = set(), j
            while cur != -1:
                if cur in seen:
                    raise StructureError(f"cycle through joint {j}")
                seen.add(cur)
                cur = self.parent[cur]


@dataclass(frozen=True)
class LevelPartition:
    H0: frozenset[int]
    H1: frozenset[int]
    H2: frozenset[int]

    @property
    def levels(self) -> tuple[frozenset[int], ...]:
        return (self.H0, self.H1, self.H2)


def build_partition() -> LevelPartition:
    return LevelPartition(
        H0=frozenset({2, 3, 6, 7, 8, 9, 12, 13}),
        H1=frozenset({1, 4, 11, 14}),
        H2=frozenset({0, 5, 10, 15}),
    )


def _row_normalize(a: np.ndarray) -> np.ndarray:
    s = a.sum(axis=1, keepdims=True)
    return np.divide(a, s, out=np.zeros_like(a), where=s > 0)


def build_subset_adjacencies(graph: SkeletonGraph, partition: LevelPartition) -> list[dict[str, np.ndarray]]:
    """Per level: row-normalised identity / centripetal / centrifugal matrices.

    A level keeps the tree edges with at least one endpoint in that level.
    Centripetal rows point from a joint to its parent (toward the root).
    """
    graph.validate()
    J = graph.joint_count
    out = []
    for members in partition.levels:
        cp = np.zeros((J, J))
        for child, par in graph.edges():
            if child in members or par in members:
                cp[child, par] = 1.0
        out.append({
            "identity": np.eye(J),
            "centripetal": _row_normalize(cp),
            "centrifugal": _row_normalize(cp.T.copy()),
        })
    return out


def build_level_links(partition: LevelPartition, joint_count: int = 16) -> list[np.ndarray]:
    """Boolean neighbour masks for EdgeConv, one per level.

    Level i links every joint of H_i with every joint of the adjacent levels
    (both directions); every joint also neighbours itself.
    """
    levels = partition.levels
    masks = []
    for i, members in enumerate(levels):
        m = np.eye(joint_count, dtype=bool)
        for k in (i - 1, i + 1):
            if 0 <= k < len(levels):
                for a in members:
                    for b in levels[k]:
                        m[a, b] = m[b, a] = True
        masks.append(m)
    return masks


def level_gcn(pose_feats: nc.Tensor, adj: dict[str, np.ndarray], params: dict[str, nc.Tensor]) -> nc.Tensor:
    """Three-subset graph convolution for one level.

    pose_feats: (..., J, C). For each subset s: project by ``{s}.w`` (C, C),
    aggregate with A_s, then a point-wise conv ``{s}.pw``/``{s}.pb``.
    Returns (..., J, 3 * C_out).
    """
    J = pose_feats.shape[-2]
    parts = []
    for s in SUBSETS:
        a = adj[s]
        if a.shape != (J, J):
            raise ContractError(f"adjacency {s} has shape {a.shape}, expected {(J, J)}")
        y = nc.linear(pose_feats, params[f"{s}.w"])
        y = nc.matmul(nc.Tensor(a), y)
        parts.append(nc.linear(y, params[f"{s}.pw"], params[f"{s}.pb"]))
    return nc.concat(parts, axis=-1)


def edge_conv(avg_feats: nc.Tensor, level_links: np.ndarray, params: dict[str, nc.Tensor]) -> nc.Tensor:
    """max_j relu(W [x_i || x_j - x_i] + b) over the neighbours j of each joint i."""
    J, C = avg_feats.shape[-2:]
    if not level_links.any(axis=1).all():
        raise StructureError("edge_conv: a joint has no neighbours")
    lead = avg_feats.shape[:-2]
    xi = nc.broadcast_to(nc.reshape(avg_feats, lead + (J, 1, C)), lead + (J, J, C))
    xj = nc.broadcast_to(nc.reshape(avg_feats, lead + (1, J, C)), lead + (J, J, C))
    pair = nc.concat([xi, xj - xi], axis=-1)
    h = nc.relu(nc.linear(pair, params["w"], params["b"]))
    return nc.masked_max(h, level_links[..., None], axis=-2)


def init_params(rng: np.random.Generator, d_model: int = 64, width: int = 16, coord_dim: int = 2) -> dict[str, nc.Tensor]:
    c_sub = d_model // 4
    c_edge = d_model - 3 * c_sub
    p = {"in.w": nc.init_weight(rng, (coord_dim, width), coord_dim), "in.b": nc.zeros(width)}
    for i in range(N_LEVELS):
        for s in SUBSETS:
            p[f"l{i}.{s}.w"] = nc.init_weight(rng, (width, width), width)
            p[f"l{i}.{s}.pw"] = nc.init_weight(rng, (width, c_sub), width)
            p[f"l{i}.{s}.pb"] = nc.zeros(c_sub)
        p[f"l{i}.edge.w"] = nc.init_weight(rng, (2 * width, c_edge), 2 * width, gain=np.sqrt(2.0))
        p[f"l{i}.edge.b"] = nc.zeros(c_edge)
    return p


def _level(params: dict[str, nc.Tensor], i: int) -> dict[str, nc.Tensor]:
    pre = f"l{i}."
    return {k[len(pre):]: v for k, v in params.items() if k.startswith(pre)}


class SkeletonEncoder:
    """Holds the fixed graph structures; parameters are passed per call."""

    def __init__(self, graph: SkeletonGraph | None = None, partition: LevelPartition | None = None):
        self.graph = graph or SkeletonGraph()
        self.partition = partition or build_partition()
        self.adjacency = build_subset_adjacencies(self.graph, self.partition)
        self.links = build_level_links(self.partition, self.graph.joint_count)

    def __call__(self, pose: nc.Tensor, params: dict[str, nc.Tensor], pool: bool = True,
                 levels: tuple[int, ...] = (0, 1, 2)) -> nc.Tensor:
        return encode_skeleton(pose, params, self, pool=pool, levels=levels)


_DEFAULT_ENCODER: SkeletonEncoder | None = None


def encode_skeleton(pose: nc.Tensor, params: dict[str, nc.Tensor], encoder: SkeletonEncoder | None = None,
                    pool: bool = True, levels: tuple[int, ...] = (0, 1, 2)) -> nc.Tensor:
    """pose (..., T, J, 2) in normalised coordinates -> (..., T, D), or (..., T, J, D) with pool=False.

    ``levels`` selects which semantic levels contribute to the sum (ablation hook).
    """
    global _DEFAULT_ENCODER
    if encoder is None:
        _DEFAULT_ENCODER = _DEFAULT_ENCODER or SkeletonEncoder()
        encoder = _DEFAULT_ENCODER
    J = encoder.graph.joint_count
    if pose.ndim < 3 or pose.shape[-2] != J:
        raise ContractError(f"pose must be (..., T, {J}, D_c), got {pose.shape}")
    x = nc.linear(pose, params["in.w"], params["in.b"])
    avg = nc.order_invariant_mean(x, axis=-3)
    total = None
    for i in sorted(levels):
        lp = _level(params, i)
        h = nc.relu(level_gcn(x, encoder.adjacency[i], lp))
        z = edge_conv(avg, encoder.links[i], {"w": lp["edge.w"], "b": lp["edge.b"]})
        z = nc.broadcast_to(nc.reshape(z, z.shape[:-2] + (1,) + z.shape[-2:]), h.shape[:-1] + (z.shape[-1],))
        out = nc.concat([h, z], axis=-1)
        total = out if total is None else total + out
    return nc.mean(total, axis=-2) if pool else total
