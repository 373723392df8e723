"""CLEAR-MOT (MOTA, FP, FN, IDSw) and IDF1 over box track tables."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import BoundingBox, boxes_to_array, iou_matrix_tlwh

_FORBIDDEN = 1e6


class TrackRow(NamedTuple):
    frame: int
    id: int
    box: BoundingBox


class TrackTable:
    """Rows of (frame, id, box), kept sorted by frame then id."""

    def __init__(self, rows: Iterable[TrackRow] = ()):
        self.rows: list[TrackRow] = sorted((TrackRow(*r) for r in rows), key=lambda r: (r.frame, r.id))
        seen = set()
        for r in self.rows:
            key = (r.frame, r.id)
            if key in seen:
                raise ValueError(f"duplicate (frame, id) pair {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other) -> bool:
        return isinstance(other, TrackTable) and self.rows == other.rows

    def frames(self) -> list[int]:
        return sorted({r.frame for r in self.rows})

    def ids(self) -> list[int]:
        return sorted({r.id for r in self.rows})

    def by_frame(self) -> dict[int, list[TrackRow]]:
        out: dict[int, list[TrackRow]] = defaultdict(list)
        for r in self.rows:
            out[r.frame].append(r)
        return out


@dataclass
class MetricsReport:
    mota: float
    idf1: float
    idsw: int
    fp: int
    fn: int
    num_gt: int
    num_pred: int = 0
    matches: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0
    events: list[tuple[int, str, int, int]] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.num_gt > 0:
            assert self.mota == 1.0 - (self.fp + self.fn + self.idsw) / self.num_gt

    @staticmethod
    def from_counts(fp: int, fn: int, idsw: int, num_gt: int, num_pred: int, matches: int,
                    idtp: int, events=None) -> "MetricsReport":
        mota = 1.0 - (fp + fn + idsw) / num_gt if num_gt else float("nan")
        denom = num_gt + num_pred
        idf1 = 2.0 * idtp / denom if denom else 1.0
        return MetricsReport(mota, idf1, idsw, fp, fn, num_gt, num_pred, matches, idtp,
                             num_pred - idtp, num_gt - idtp, list(events or []))

    @staticmethod
    def merge(reports: Sequence["MetricsReport"]) -> "MetricsReport":
        """Sum counts over sequences and recompute the ratios."""
        s = lambda name: sum(getattr(r, name) for r in reports)  # noqa: E731
        return MetricsReport.from_counts(s("fp"), s("fn"), s("idsw"), s("num_gt"), s("num_pred"),
                                         s("matches"), s("idtp"))

    def as_dict(self) -> dict[str, float | int]:
        return {
            "MOTA": self.mota, "IDF1": self.idf1, "IDSw": self.idsw, "FP": self.fp, "FN": self.fn,
            "GT": self.num_gt, "PRED": self.num_pred, "IDTP": self.idtp, "IDFP": self.idfp, "IDFN": self.idfn,
        }


def match_frame(gt: Sequence[tuple[int, BoundingBox]], pred: Sequence[tuple[int, BoundingBox]],
                iou_thr: float = 0.5, previous: dict[int, int] | None = None) -> dict[int, int]:
    """Match one frame's ground truth to predictions, returning ``{gt_id: pred_id}``.

    Ground-truth tracks first keep their last matched prediction when that
    pair still reaches ``iou_thr``; the rest are matched by a maximum
    cardinality, minimum ``1 - IoU`` assignment over pairs with IoU >= iou_thr.
    """
    previous = previous or {}
    gt_ids = [g for g, _ in gt]
    pred_ids = [p for p, _ in pred]
    ious = iou_matrix_tlwh(boxes_to_array([b for _, b in gt]), boxes_to_array([b for _, b in pred]))
    pred_col = {p: j for j, p in enumerate(pred_ids)}

    result: dict[int, int] = {}
    used_rows, used_cols = set(), set()
    for i, g in enumerate(gt_ids):
        p = previous.get(g)
        j = pred_col.get(p) if p is not None else None
        if j is not None and j not in used_cols and ious[i, j] >= iou_thr:
            result[g] = p
            used_rows.add(i)
            used_cols.add(j)

    rows = [i for i in range(len(gt_ids)) if i not in used_rows]
    cols = [j for j in range(len(pred_ids)) if j not in used_cols]
    if rows and cols:
        sub = ious[np.ix_(rows, cols)]
        cost = np.where(sub >= iou_thr, 1.0 - sub, _FORBIDDEN)
        r, c = linear_sum_assignment(cost)
        for a, b in zip(r, c):
            if sub[a, b] >= iou_thr:
                result[gt_ids[rows[a]]] = pred_ids[cols[b]]
    return result


def id_true_positives(gt: TrackTable, pred: TrackTable, iou_thr: float = 0.5):
    """Frame-overlap counts between every ground-truth id and predicted id.

    Returns ``(gt_ids, pred_ids, counts)`` with ``counts[i, j]`` the number of
    frames where both are present and their boxes reach ``iou_thr``.
    """
    gt_ids, pred_ids = gt.ids(), pred.ids()
    gi = {g: i for i, g in enumerate(gt_ids)}
    pj = {p: j for j, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    pred_frames = pred.by_frame()
    for frame, g_rows in gt.by_frame().items():
        p_rows = pred_frames.get(frame)
        if not p_rows:
            continue
        ious = iou_matrix_tlwh(boxes_to_array([r.box for r in g_rows]), boxes_to_array([r.box for r in p_rows]))
        ii, jj = np.nonzero(ious >= iou_thr)
        for a, b in zip(ii, jj):
            counts[gi[g_rows[a].id], pj[p_rows[b].id]] += 1
    return gt_ids, pred_ids, counts


def evaluate(gt: TrackTable, pred: TrackTable, iou_thr: float = 0.5) -> MetricsReport:
    fp = fn = idsw = matches = 0
    last_match: dict[int, int] = {}
    events: list[tuple[int, str, int, int]] = []
    gt_frames, pred_frames = gt.by_frame(), pred.by_frame()
    for frame in sorted(set(gt_frames) | set(pred_frames)):
        g_rows = gt_frames.get(frame, [])
        p_rows = pred_frames.get(frame, [])
        m = match_frame([(r.id, r.box) for r in g_rows], [(r.id, r.box) for r in p_rows], iou_thr, last_match)
        for g, p in m.items():
            if g in last_match and last_match[g] != p:
                idsw += 1
                events.append((frame, "IDSW", g, p))
            last_match[g] = p
        matches += len(m)
        taken = set(m.values())
        for r in g_rows:
            if r.id not in m:
                fn += 1
                events.append((frame, "FN", r.id, -1))
        for r in p_rows:
            if r.id not in taken:
                fp += 1
                events.append((frame, "FP", -1, r.id))

    _, _, counts = id_true_positives(gt, pred, iou_thr)
    idtp = 0
    if counts.size:
        r, c = linear_sum_assignment(counts, maximize=True)
        idtp = int(counts[r, c].sum())
    return MetricsReport.from_counts(fp, fn, idsw, len(gt), len(pred), matches, idtp, events)
