"""Seeded experiments over the scenario suites.

These helpers back the ``ablate`` command and the directional checks on the
suppression, fusion and occlusion-aware gating mechanisms.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import iou
from .metrics import MetricsReport, TrackRow, TrackTable, evaluate
from .motion import AMSConfig, KalmanModel, MotionTrack
from .simulation import SUITES, Simulation, generate, standard_suite
from .tracker import Tracker, TrackerConfig, Tracklet, run_sequence

COMBINED = SUITES
SWEEP_PARAMS = ("alpha0", "theta_v")


def sweep_values(step: float = 0.1) -> list[float]:
    n = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(n + 1)]


def tracks_to_table(tracklets: Sequence[Tracklet]) -> TrackTable:
    return TrackTable(TrackRow(e.frame, t.id, e.box) for t in tracklets for e in t.history)


def simulate_suite(suites: Iterable[str], seeds: Iterable[int]) -> list[Simulation]:
    seeds = list(seeds)
    return [generate(standard_suite(name, s)) for name in suites for s in seeds]


def track_and_evaluate(sim: Simulation, config: TrackerConfig) -> MetricsReport:
    results, _ = run_sequence(sim.observations(), config)
    return evaluate(sim.gt, tracks_to_table(results))


# ---------------------------------------------------------------------------
# motion: prediction quality after a detection gap


def reappearance_iou(sim: Simulation, ams: AMSConfig, model: KalmanModel | None = None) -> float | None:
    """IoU between the predicted and true box when the longest-hidden agent reappears.

    The agent's own detections (known from generator telemetry) drive a single
    filter, so the number isolates motion estimation from association.
    Returns ``None`` when no agent has a detection gap.
    """
    gaps = sim.detection_gaps()
    if not gaps or max(gaps.values()) == 0:
        return None
    agent = max(sorted(gaps), key=lambda a: gaps[a])
    track: MotionTrack | None = None
    last = 0
    for fr in sim.frames:
        dets = dict(zip(fr.det_agent, fr.detections))
        if track is None:
            if agent in dets:
                track = MotionTrack.start(dets[agent].box, fr.frame, model, ams)
                last = fr.frame
            continue
        track.predict()
        if agent not in dets:
            continue
        if fr.frame - last - 1 == gaps[agent]:
            return iou(track.box(), dict(fr.gt)[agent])
        track.update(dets[agent].box, fr.frame)
        last = fr.frame
    return None


@dataclass
class PairedComparison:
    """Per-scenario values of a treatment and a baseline."""

    labels: list[str]
    treatment: np.ndarray
    baseline: np.ndarray

    @property
    def mean_treatment(self) -> float:
        return float(self.treatment.mean())

    @property
    def mean_baseline(self) -> float:
        return float(self.baseline.mean())

    def fraction(self, op) -> float:
        return float(np.mean(op(self.treatment, self.baseline)))


def ams_reappearance(sims: Sequence[Simulation], alpha0: float = 0.2, theta_v: float = 0.2,
                     baseline_alpha0: float = 1.0) -> PairedComparison:
    labels, a, b = [], [], []
    for sim in sims:
        x = reappearance_iou(sim, AMSConfig(alpha0=alpha0, theta_v=theta_v))
        y = reappearance_iou(sim, AMSConfig(alpha0=baseline_alpha0, theta_v=theta_v))
        if x is None or y is None:
            continue
        labels.append(f"{sim.spec.name}:{sim.spec.seed}")
        a.append(x)
        b.append(y)
    return PairedComparison(labels, np.array(a), np.array(b))


# ---------------------------------------------------------------------------
# association: identity switches with and without the threshold offset


def idsw_comparison(sims: Sequence[Simulation], treatment: TrackerConfig,
                    baseline: TrackerConfig) -> PairedComparison:
    labels, a, b = [], [], []
    for sim in sims:
        labels.append(f"{sim.spec.name}:{sim.spec.seed}")
        a.append(track_and_evaluate(sim, treatment).idsw)
        b.append(track_and_evaluate(sim, baseline).idsw)
    return PairedComparison(labels, np.array(a), np.array(b))


# ---------------------------------------------------------------------------
# appearance: identity-correct matches decided with an open appearance gate


def correct_appearance_matches(sim: Simulation, config: TrackerConfig) -> tuple[int, int]:
    """Count stage-one matches whose appearance gate was open, split into
    (identity-correct, identity-wrong).

    A tracklet's identity is the agent that produced the detection it was
    born from.
    """
    tracker = Tracker(config)
    owner: dict[int, int] = {}
    good = bad = 0
    for fr in sim.frames:
        first_event = len(tracker.events)
        tracker.step(fr.frame, fr.detections)
        boxes = [d.box for d in fr.detections]
        for t in tracker.tracklets:
            if t.id not in owner:
                owner[t.id] = fr.det_agent[boxes.index(t.history[0].box)]
        for e in tracker.events[first_event:]:
            if e.stage != 1 or e.d_cos_hat >= 1.0:
                continue
            if owner[e.track_id] == fr.det_agent[e.det_index]:
                good += 1
            else:
                bad += 1
    return good, bad


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass(frozen=True)
class SweepRow:
    value: float
    idf1: float
    mota: float
    idsw: int


def ablation_sweep(param: str, sims: Sequence[Simulation], values: Sequence[float] | None = None,
                   base: TrackerConfig | None = None, workers: int = 1) -> list[SweepRow]:
    """Evaluate ``base`` with ``param`` set to each value; metrics are merged over ``sims``.

    Rows come back in the order of ``values`` whatever the worker count.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")
    base = base or TrackerConfig()
    values = sweep_values() if values is None else list(values)

    def point(v: float) -> SweepRow:
        cfg = dataclasses.replace(base, **{param: float(v)})
        merged = MetricsReport.merge([track_and_evaluate(sim, cfg) for sim in sims])
        return SweepRow(float(v), merged.idf1, merged.mota, merged.idsw)

    if workers <= 1:
        return [point(v) for v in values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(point, values))


def interior_optimum(rows: Sequence[SweepRow]) -> bool:
    """True when some interior sweep point has strictly fewer switches than both ends."""
    if len(rows) < 3:
        return False
    best_inner = min(r.idsw for r in rows[1:-1])
    return best_inner < rows[0].idsw and best_inner < rows[-1].idsw
