"""Occlusion-aware cost construction and bipartite matching.

Stage one fuses IoU and gated appearance distances, with a relaxed IoU gate
for tracklets that were not observed on the previous frame.  Stage two matches
leftover active tracklets to low-score detections by IoU alone.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

GATED = 1.0


class TrackStatus(str, enum.Enum):
    NEW = "new"
    TRACKED = "tracked"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class MatchResult:
    matched: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracklets: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)


def occlusion_thresholds(statuses: Sequence[TrackStatus], theta0: float = 0.5, offset: float = 0.2) -> np.ndarray:
    """Per-tracklet IoU-distance gates: ``theta0`` if tracked, ``theta0 + offset`` otherwise (max 1)."""
    if offset < 0:
        raise ValueError("offset must be nonnegative")
    relaxed = min(theta0 + offset, 1.0)
    return np.array([relaxed if s is TrackStatus.LOST else theta0 for s in statuses], dtype=float)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"cost matrices differ in shape: {a.shape} vs {b.shape}")


def gated_embedding_distance(d_cos: np.ndarray, d_iou: np.ndarray, theta_emb: float,
                             thresholds: np.ndarray) -> np.ndarray:
    """Keep the appearance distance only where both it and the IoU distance clear their gates."""
    d_cos = np.asarray(d_cos, dtype=float)
    d_iou = np.asarray(d_iou, dtype=float)
    _check_same_shape(d_cos, d_iou)
    thresholds = np.asarray(thresholds, dtype=float).reshape(-1, 1)
    if thresholds.shape[0] != d_cos.shape[0]:
        raise ValueError("one IoU threshold per tracklet row required")
    keep = (d_cos < theta_emb) & (d_iou < thresholds)
    return np.where(keep, d_cos, GATED)


def fused_distance(d_iou: np.ndarray, d_cos_hat: np.ndarray) -> np.ndarray:
    d_iou = np.asarray(d_iou, dtype=float)
    d_cos_hat = np.asarray(d_cos_hat, dtype=float)
    _check_same_shape(d_iou, d_cos_hat)
    return np.minimum(d_iou, d_cos_hat)


def hungarian(cost: np.ndarray, gate: float = math.inf) -> MatchResult:
    """Minimum-cost assignment where leaving a pair unmatched costs ``gate``.

    Pairs whose cost is at or above ``gate`` are never kept. With an infinite
    gate this is the plain rectangular assignment problem.
    """
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if n == 0 or m == 0:
        return MatchResult([], list(range(n)), list(range(m)))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if math.isinf(gate):
        rows, cols = linear_sum_assignment(cost)
    else:
        # Pad with dummy rows/cols at gate/2 so every real row and column may
        # stay unmatched; a real pair is only chosen when it beats the gate.
        size = n + m
        big = np.zeros((size, size))
        big[:n, :m] = cost
        big[:n, m:] = gate / 2.0
        big[n:, :m] = gate / 2.0
        r, c = linear_sum_assignment(big)
        keep = (r < n) & (c < m)
        rows, cols = r[keep], c[keep]
    matched = sorted((int(i), int(j)) for i, j in zip(rows, cols) if cost[i, j] < gate)
    mr = {i for i, _ in matched}
    mc = {j for _, j in matched}
    return MatchResult(
        matched,
        [i for i in range(n) if i not in mr],
        [j for j in range(m) if j not in mc],
    )


@dataclass(frozen=True)
class AssociationParams:
    theta_iou: float = 0.5
    offset: float = 0.2
    theta_emb: float = 0.25
    first_gate: float = 0.8
    second_gate: float = 0.5


@dataclass
class StageOneCosts:
    """Intermediate matrices of the first association stage, kept for telemetry."""

    d_iou: np.ndarray
    d_cos_hat: np.ndarray
    fused: np.ndarray


def stage_one_costs(d_iou: np.ndarray, d_cos: np.ndarray | None, statuses: Sequence[TrackStatus],
                    params: AssociationParams) -> StageOneCosts:
    d_iou = np.asarray(d_iou, dtype=float)
    if d_cos is None:
        d_cos_hat = np.full(d_iou.shape, GATED)
    else:
        thresholds = occlusion_thresholds(statuses, params.theta_iou, params.offset)
        d_cos_hat = gated_embedding_distance(d_cos, d_iou, params.theta_emb, thresholds)
    return StageOneCosts(d_iou, d_cos_hat, fused_distance(d_iou, d_cos_hat))


def associate_two_stage(d_iou_high: np.ndarray, d_cos_high: np.ndarray | None, statuses: Sequence[TrackStatus],
                        d_iou_low: np.ndarray, params: AssociationParams = AssociationParams(),
                        ) -> tuple[MatchResult, MatchResult, StageOneCosts]:
    """Run both association stages on precomputed distance matrices.

    ``d_iou_high``/``d_cos_high`` are tracklets x high-score detections;
    ``d_iou_low`` is tracklets x low-score detections over the same tracklet rows.
    ``d_cos_high`` entries may be 1.0 where either side lacks an embedding.
    The returned low-stage result indexes back into the full tracklet list.
    """
    costs = stage_one_costs(d_iou_high, d_cos_high, statuses, params)
    first = hungarian(costs.fused, params.first_gate)

    # Only tracklets that were actively tracked may take a low-score detection.
    rows = [i for i in first.unmatched_tracklets if statuses[i] is TrackStatus.TRACKED]
    d_iou_low = np.asarray(d_iou_low, dtype=float)
    if d_iou_low.size == 0:
        d_iou_low = np.zeros((len(statuses), d_iou_low.shape[-1] if d_iou_low.ndim == 2 else 0))
    sub = hungarian(d_iou_low[rows], params.second_gate)
    matched_low = [(rows[i], j) for i, j in sub.matched]
    taken = {i for i, _ in matched_low}
    second = MatchResult(
        matched_low,
        [i for i in first.unmatched_tracklets if i not in taken],
        sub.unmatched_detections,
    )
    return first, second, costs
