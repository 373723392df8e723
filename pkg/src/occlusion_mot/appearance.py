"""Pose-guided appearance embeddings.

Feature maps (``H x W x C``) and COCO-17 keypoint heatmaps (``H x W x 17``)
come from external models; this module only does the deterministic math:
grouping keypoints into six body parts, part-masked pooling, the local and
global necks, visibility-adaptive fusion, EMA maintenance and cosine distance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

NUM_KEYPOINTS = 17
NUM_PARTS = 6

KEYPOINT_NAMES = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

PART_NAMES = ("head", "torso", "left_arm", "right_arm", "left_leg", "right_leg")

# COCO-17 indices per part; every keypoint belongs to exactly one part.
PART_GROUPS: tuple[tuple[int, ...], ...] = (
    (0, 1, 2, 3, 4),
    (5, 6, 11, 12),
    (7, 9),
    (8, 10),
    (13, 15),
    (14, 16),
)


class DegenerateEmbeddingError(ValueError):
    """Raised when an embedding has zero norm where a direction is required."""


@dataclass(frozen=True)
class KeypointHeatmaps:
    data: np.ndarray  # (H, W, 17)
    confidence: np.ndarray  # (17,)

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != NUM_KEYPOINTS:
            raise ValueError(f"keypoint heatmaps must be H x W x 17, got {self.data.shape}")
        if self.confidence.shape != (NUM_KEYPOINTS,):
            raise ValueError("keypoint confidence must have 17 entries")

    @classmethod
    def from_maps(cls, data: np.ndarray) -> "KeypointHeatmaps":
        """Per-keypoint confidence taken as the channel peak."""
        data = np.asarray(data, dtype=float)
        return cls(data, data.reshape(-1, data.shape[-1]).max(axis=0))


@dataclass(frozen=True)
class PartHeatmaps:
    data: np.ndarray  # (H, W, 6)
    confidence: np.ndarray  # (6,)


def group_heatmaps(h: KeypointHeatmaps) -> PartHeatmaps:
    parts = np.stack([h.data[..., list(g)].sum(axis=-1) for g in PART_GROUPS], axis=-1)
    conf = np.array([h.confidence[list(g)].max() for g in PART_GROUPS])
    return PartHeatmaps(np.clip(parts, 0.0, 1.0), conf)


def part_embeddings(f: np.ndarray, p: PartHeatmaps) -> np.ndarray:
    """Spatial sums of the feature map under each part mask, shape (6, C)."""
    f = np.asarray(f, dtype=float)
    if f.ndim != 3:
        raise ValueError(f"feature map must be H x W x C, got shape {f.shape}")
    if f.shape[:2] != p.data.shape[:2]:
        raise ValueError(f"feature map {f.shape[:2]} and heatmaps {p.data.shape[:2]} differ spatially")
    # sum_{h,w} f[h,w,c] * mask_i[h,w]
    return np.einsum("hwc,hwi->ic", f, p.data)


def block_average_projection(channels: int) -> np.ndarray:
    """Default local-neck weights (C x 6C): the mean of the six part blocks."""
    return np.tile(np.eye(channels), (1, NUM_PARTS)) / NUM_PARTS


def local_neck(parts: np.ndarray, proj: np.ndarray | None = None) -> np.ndarray:
    """Project the concatenated part embeddings (6C) down to C channels."""
    parts = np.asarray(parts, dtype=float)
    if parts.ndim != 2 or parts.shape[0] != NUM_PARTS:
        raise ValueError(f"expected 6 part embeddings, got shape {parts.shape}")
    c = parts.shape[1]
    if proj is None:
        proj = block_average_projection(c)
    proj = np.asarray(proj, dtype=float)
    if proj.shape != (c, NUM_PARTS * c):
        raise ValueError(f"projection must be {c} x {NUM_PARTS * c}, got {proj.shape}")
    return proj @ parts.reshape(-1)


def global_neck(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f.mean(axis=(0, 1))


def count_confident_parts(p: PartHeatmaps, theta_p: float = 0.5) -> int:
    return int(np.count_nonzero(np.asarray(p.confidence) > theta_p))


def adaptive_fuse(e_local: np.ndarray, e_global: np.ndarray, n_p: int) -> np.ndarray:
    """Weight the local embedding by the fraction of visible parts ``n_p / 6``."""
    e_local = np.asarray(e_local, dtype=float)
    e_global = np.asarray(e_global, dtype=float)
    if e_local.shape != e_global.shape:
        raise ValueError(f"embedding shapes differ: {e_local.shape} vs {e_global.shape}")
    if not 0 <= n_p <= NUM_PARTS:
        raise ValueError(f"n_p must lie in [0, 6], got {n_p}")
    if n_p == NUM_PARTS:
        return e_local.copy()
    if n_p == 0:
        return e_global.copy()
    return (n_p / NUM_PARTS) * e_local + ((NUM_PARTS - n_p) / NUM_PARTS) * e_global


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm == 0.0:
        raise DegenerateEmbeddingError("cannot normalize a zero or non-finite embedding")
    return v / norm


def pose_guided_embedding(f: np.ndarray, heatmaps: KeypointHeatmaps, proj: np.ndarray | None = None,
                          theta_p: float = 0.5, fusion: bool = True) -> np.ndarray:
    """Unit-norm detection embedding from a feature map and keypoint heatmaps.

    With ``fusion=False`` only the global branch is used. Each branch is unit
    normalized before mixing so ``n_p`` alone sets the balance.
    """
    e_global = normalize(global_neck(f))
    if not fusion:
        return e_global
    parts = group_heatmaps(heatmaps)
    n_p = count_confident_parts(parts, theta_p)
    if n_p == 0:
        return e_global
    e_local = normalize(local_neck(part_embeddings(f, parts), proj))
    return normalize(adaptive_fuse(e_local, e_global, n_p))


def ema_update(track_e: np.ndarray, det_e: np.ndarray, beta: float) -> np.ndarray:
    """``(1 - beta) * track + beta * det``, renormalized to unit length."""
    track_e = np.asarray(track_e, dtype=float)
    det_e = np.asarray(det_e, dtype=float)
    if track_e.shape != det_e.shape:
        raise ValueError(f"embedding shapes differ: {track_e.shape} vs {det_e.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return normalize((1.0 - beta) * track_e + beta * det_e)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateEmbeddingError("cosine distance undefined for zero vectors")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def cosine_distance_matrix(rows: Sequence[np.ndarray], cols: Sequence[np.ndarray]) -> np.ndarray:
    if len(rows) == 0 or len(cols) == 0:
        return np.zeros((len(rows), len(cols)))
    r = np.stack([normalize(v) for v in rows])
    c = np.stack([normalize(v) for v in cols])
    return np.clip(1.0 - r @ c.T, 0.0, 2.0)
