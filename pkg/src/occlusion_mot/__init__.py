"""Occlusion-aware multi-pedestrian tracking with a seeded occlusion simulator."""

from .geometry import BoundingBox, CenterBox, iou, iou_distance_matrix
from .metrics import MetricsReport, TrackRow, TrackTable, evaluate
from .simulation import ScenarioSpec, generate, standard_suite
from .tracker import Detection, FrameObservations, Tracker, TrackerConfig, run_sequence

__all__ = [
    "BoundingBox", "CenterBox", "Detection", "FrameObservations", "MetricsReport", "ScenarioSpec",
    "TrackRow", "TrackTable", "Tracker", "TrackerConfig", "evaluate", "generate", "iou",
    "iou_distance_matrix", "run_sequence", "standard_suite",
]
__version__ = "0.1.0"
