"""Per-frame tracking loop: score split, prediction, two-stage association,
suppressed Kalman updates, embedding EMA and tracklet lifecycle."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .appearance import KeypointHeatmaps, cosine_distance_matrix, ema_update, normalize, pose_guided_embedding
from .association import AssociationParams, MatchResult, TrackStatus, associate_two_stage
from .geometry import BoundingBox, boxes_to_array, iou_matrix_tlwh
from .motion import AMSConfig, FilterKind, KalmanModel, KalmanTrackState, MotionTrack

logger = logging.getLogger(__name__)

IDENTITY_WARP = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass
class Detection:
    box: BoundingBox
    score: float
    embedding: np.ndarray | None = None
    feature_map: np.ndarray | None = None
    heatmaps: KeypointHeatmaps | None = None


@dataclass
class FrameObservations:
    frame: int
    detections: list[Detection] = field(default_factory=list)


@dataclass(frozen=True)
class TrackerConfig:
    det_thresh: float = 0.6
    new_track_thresh: float = 0.7
    ams: bool = True
    alpha0: float = 0.2
    theta_v: float = 0.2
    filter_kind: FilterKind = FilterKind.MEAN
    buffer_size: int = 30
    theta_iou: float = 0.5
    offset: float = 0.2
    theta_emb: float = 0.25
    appearance: bool = True
    fusion: bool = True
    theta_p: float = 0.5
    beta: float = 0.1
    max_lost: int = 30
    first_gate: float = 0.8
    second_gate: float = 0.5
    max_interp_gap: int = 20

    def __post_init__(self):
        unit = ("det_thresh", "new_track_thresh", "alpha0", "theta_v", "theta_iou", "offset",
                "theta_emb", "theta_p", "beta", "first_gate", "second_gate")
        for name in unit:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.max_lost < 1:
            raise ValueError("max_lost must be at least 1")
        if self.buffer_size < 2:
            raise ValueError("buffer_size must be at least 2")
        object.__setattr__(self, "filter_kind", FilterKind(self.filter_kind))

    def ams_config(self) -> AMSConfig:
        return AMSConfig(self.ams, self.alpha0, self.theta_v, self.buffer_size, self.filter_kind)

    def association_params(self) -> AssociationParams:
        return AssociationParams(self.theta_iou, self.offset, self.theta_emb, self.first_gate, self.second_gate)


class HistoryEntry(NamedTuple):
    frame: int
    box: BoundingBox
    observed: bool


@dataclass
class Tracklet:
    id: int
    motion: MotionTrack
    embedding: np.ndarray | None
    status: TrackStatus = TrackStatus.NEW
    frames_since_update: int = 0
    history: list[HistoryEntry] = field(default_factory=list)
    confirmed: bool = False

    @property
    def box(self) -> BoundingBox:
        return self.motion.box()


@dataclass
class MatchEvent:
    """One accepted match, kept for diagnostics and experiments."""

    frame: int
    stage: int
    track_id: int
    det_index: int
    d_iou: float
    d_cos_hat: float


def split_detections(dets: Sequence[Detection], det_thresh: float) -> tuple[list[int], list[int]]:
    """Indices of high (score > det_thresh) and low detections."""
    high = [i for i, d in enumerate(dets) if d.score > det_thresh]
    low = [i for i, d in enumerate(dets) if not d.score > det_thresh]
    return high, low


def motion_compensate(st: KalmanTrackState, warp: np.ndarray) -> KalmanTrackState:
    """Apply a 2x3 affine camera warp to a center-form state."""
    warp = np.asarray(warp, dtype=float)
    if warp.shape != (2, 3) or not np.all(np.isfinite(warp)):
        raise ValueError("warp must be a finite 2x3 matrix")
    lin = warp[:2, :2]
    big = np.kron(np.eye(4), lin)
    mean = big @ st.mean
    mean[:2] += warp[:, 2]
    cov = big @ st.covariance @ big.T
    return KalmanTrackState(mean, cov)


class Tracker:
    """Online multi-pedestrian tracker for one sequence."""

    def __init__(self, config: TrackerConfig | None = None, model: KalmanModel | None = None,
                 projection: np.ndarray | None = None):
        self.config = config or TrackerConfig()
        self.model = model or KalmanModel()
        self.projection = projection
        self.tracklets: list[Tracklet] = []
        self.finished: list[Tracklet] = []
        self.events: list[MatchEvent] = []
        self._next_id = 1
        self._last_frame: int | None = None

    def _embed(self, det: Detection) -> np.ndarray | None:
        cfg = self.config
        if not cfg.appearance:
            return None
        if det.embedding is not None:
            return normalize(det.embedding)
        if det.feature_map is not None and det.heatmaps is not None:
            return pose_guided_embedding(det.feature_map, det.heatmaps, self.projection, cfg.theta_p, cfg.fusion)
        return None

    def step(self, frame: int, detections: Sequence[Detection], warp: np.ndarray | None = None) -> list[Tracklet]:
        """Process one frame and return the tracklets confirmed as tracked on it."""
        if self._last_frame is not None and frame <= self._last_frame:
            raise ValueError(f"frame {frame} does not follow frame {self._last_frame}")
        self._last_frame = frame
        cfg = self.config

        high_idx, low_idx = split_detections(detections, cfg.det_thresh)
        high = [detections[i] for i in high_idx]
        low = [detections[i] for i in low_idx]
        high_emb = [self._embed(d) for d in high]

        pool = self.tracklets
        for t in pool:
            t.motion.predict()
            if warp is not None:
                t.motion.state = motion_compensate(t.motion.state, warp)

        track_boxes = np.array([t.motion.state.to_box().to_array() for t in pool]).reshape(-1, 4)
        d_iou_high = 1.0 - iou_matrix_tlwh(track_boxes, boxes_to_array([d.box for d in high]))
        d_iou_low = 1.0 - iou_matrix_tlwh(track_boxes, boxes_to_array([d.box for d in low]))
        d_cos = self._appearance_costs(pool, high_emb) if cfg.appearance else None
        statuses = [t.status for t in pool]

        first, second, costs = associate_two_stage(d_iou_high, d_cos, statuses, d_iou_low, cfg.association_params())

        for i, j in first.matched:
            t = pool[i]
            self._apply_match(t, frame, high[j])
            if high_emb[j] is not None:
                t.embedding = high_emb[j] if t.embedding is None else ema_update(t.embedding, high_emb[j], cfg.beta)
            self.events.append(MatchEvent(frame, 1, t.id, high_idx[j], float(costs.d_iou[i, j]),
                                          float(costs.d_cos_hat[i, j])))
        for i, j in second.matched:
            t = pool[i]
            self._apply_match(t, frame, low[j])
            self.events.append(MatchEvent(frame, 2, t.id, low_idx[j], float(d_iou_low[i, j]), 1.0))

        for i in second.unmatched_tracklets:
            self._mark_missed(pool[i])

        unmatched_high = set(first.unmatched_detections)
        for j in sorted(unmatched_high):
            det = high[j]
            if det.score > cfg.new_track_thresh:
                self._spawn(frame, det, high_emb[j])

        alive = []
        for t in self.tracklets:
            if t.status is TrackStatus.REMOVED:
                self.finished.append(t)
            else:
                alive.append(t)
        self.tracklets = alive
        return [t for t in self.tracklets if t.status is TrackStatus.TRACKED]

    def _appearance_costs(self, pool: list[Tracklet], high_emb: list[np.ndarray | None]) -> np.ndarray:
        d = np.ones((len(pool), len(high_emb)))
        rows = [i for i, t in enumerate(pool) if t.embedding is not None and t.status is not TrackStatus.NEW]
        cols = [j for j, e in enumerate(high_emb) if e is not None]
        if rows and cols:
            sub = cosine_distance_matrix([pool[i].embedding for i in rows], [high_emb[j] for j in cols])
            d[np.ix_(rows, cols)] = sub
        return d

    def _apply_match(self, t: Tracklet, frame: int, det: Detection) -> None:
        if t.status is TrackStatus.LOST:
            t.motion.buffer.clear()
        t.motion.update(det.box, frame)
        t.status = TrackStatus.TRACKED
        t.confirmed = True
        t.frames_since_update = 0
        t.history.append(HistoryEntry(frame, t.motion.box(), True))

    def _mark_missed(self, t: Tracklet) -> None:
        if t.status is TrackStatus.NEW:
            t.status = TrackStatus.REMOVED
            return
        t.frames_since_update += 1
        if t.status is TrackStatus.TRACKED:
            t.status = TrackStatus.LOST
        if t.frames_since_update > self.config.max_lost:
            t.status = TrackStatus.REMOVED

    def _spawn(self, frame: int, det: Detection, emb: np.ndarray | None) -> None:
        motion = MotionTrack.start(det.box, frame, self.model, self.config.ams_config())
        t = Tracklet(self._next_id, motion, emb)
        self._next_id += 1
        t.history.append(HistoryEntry(frame, det.box, True))
        self.tracklets.append(t)

    def all_tracklets(self) -> list[Tracklet]:
        return sorted(self.finished + self.tracklets, key=lambda t: t.id)

    def results(self, interpolate_gaps: bool = True) -> list[Tracklet]:
        """Confirmed tracklets, optionally with short gaps filled."""
        out = [t for t in self.all_tracklets() if t.confirmed]
        if interpolate_gaps:
            out = interpolate(out, self.config.max_interp_gap)
        return out


def interpolate(tracklets: Sequence[Tracklet], max_gap: int = 20) -> list[Tracklet]:
    """Linearly fill gaps of at most ``max_gap`` missing frames between observed boxes."""
    out = []
    for t in tracklets:
        hist = sorted(t.history, key=lambda e: e.frame)
        filled: list[HistoryEntry] = []
        for prev, cur in zip(hist, hist[1:]):
            filled.append(prev)
            missing = cur.frame - prev.frame - 1
            if 0 < missing <= max_gap and prev.observed and cur.observed:
                a, b = prev.box.to_array(), cur.box.to_array()
                span = cur.frame - prev.frame
                for f in range(prev.frame + 1, cur.frame):
                    frac = (f - prev.frame) / span
                    filled.append(HistoryEntry(f, BoundingBox.from_array(a + (b - a) * frac), False))
        if hist:
            filled.append(hist[-1])
        out.append(dataclasses.replace(t, history=filled))
    return out


def run_sequence(frames: Sequence[FrameObservations], config: TrackerConfig | None = None,
                 warps: dict[int, np.ndarray] | None = None, projection: np.ndarray | None = None,
                 interpolate_gaps: bool = True) -> tuple[list[Tracklet], Tracker]:
    """Track a whole sequence; ``warps[k]`` maps frame k-1 to frame k."""
    tracker = Tracker(config, projection=projection)
    for obs in frames:
        warp = None if warps is None else warps.get(obs.frame)
        tracker.step(obs.frame, obs.detections, warp)
    return tracker.results(interpolate_gaps), tracker
