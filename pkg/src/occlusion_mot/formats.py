"""File formats: MOTChallenge rows, tensor sidecars, warps, flat configs, reports.

All writers go through :func:`atomic_write`, so a failed command never leaves
a half-written file behind.
"""

from __future__ import annotations

import dataclasses
import enum
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .appearance import KeypointHeatmaps
from .geometry import BoundingBox
from .metrics import MetricsReport, TrackRow, TrackTable
from .simulation import Simulation
from .tracker import Detection, FrameObservations, Tracklet, TrackerConfig

MOT_FIELDS = 10


class FormatError(ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, path: str | os.PathLike | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
        self.path = path
        self.line = line


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_lines(path: str | os.PathLike) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


# ---------------------------------------------------------------------------
# MOTChallenge rows


class MotRow(NamedTuple):
    frame: int
    id: int
    x: float
    y: float
    w: float
    h: float
    conf: float = 1.0
    wx: float = -1.0
    wy: float = -1.0
    wz: float = -1.0

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.w, self.h)


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def format_row(r: MotRow) -> str:
    tail = ",".join(_fmt(v) if v != -1 else "-1" for v in (r.wx, r.wy, r.wz))
    return f"{r.frame},{r.id},{_fmt(r.x)},{_fmt(r.y)},{_fmt(r.w)},{_fmt(r.h)},{_fmt(r.conf)},{tail}"


def _parse_int(tok: str, name: str, path, lineno: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"non-numeric {name} {tok!r}", path, lineno) from None
    if not v.is_integer():
        raise FormatError(f"{name} must be an integer, got {tok!r}", path, lineno)
    return int(v)


def parse_mot_lines(lines: Iterable[str], path: str | os.PathLike | None = None) -> list[MotRow]:
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != MOT_FIELDS:
            raise FormatError(f"expected {MOT_FIELDS} comma-separated fields, found {len(parts)}", path, lineno)
        frame = _parse_int(parts[0], "frame", path, lineno)
        tid = _parse_int(parts[1], "id", path, lineno)
        if frame < 1:
            raise FormatError(f"frame must be >= 1, got {frame}", path, lineno)
        try:
            vals = [float(p) for p in parts[2:]]
        except ValueError:
            raise FormatError("non-numeric field", path, lineno) from None
        if not all(np.isfinite(vals)):
            raise FormatError("non-finite field", path, lineno)
        if vals[2] <= 0 or vals[3] <= 0:
            raise FormatError("box width and height must be positive", path, lineno)
        rows.append(MotRow(frame, tid, *vals))
    return rows


def parse_mot(path: str | os.PathLike) -> list[MotRow]:
    """Read a MOTChallenge 10-field file into rows (file order kept)."""
    return parse_mot_lines(_read_lines(path), path)


def rows_to_table(rows: Sequence[MotRow]) -> TrackTable:
    try:
        return TrackTable(TrackRow(r.frame, r.id, r.box) for r in rows)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def rows_to_observations(rows: Sequence[MotRow]) -> list[FrameObservations]:
    """Group detection rows by frame, keeping file order within a frame.

    Frames without rows are included as empty observations so the tracker
    sees every frame between the first and the last.
    """
    if not rows:
        return []
    by_frame: dict[int, list[Detection]] = {}
    for r in rows:
        by_frame.setdefault(r.frame, []).append(Detection(r.box, r.conf))
    last = max(by_frame)
    return [FrameObservations(f, by_frame.get(f, [])) for f in range(1, last + 1)]


def write_mot(path: str | os.PathLike, rows: Iterable[MotRow]) -> None:
    atomic_write(path, "".join(format_row(r) + "\n" for r in rows))


def tracklet_rows(tracklets: Sequence[Tracklet]) -> list[MotRow]:
    rows = [MotRow(e.frame, t.id, e.box.x, e.box.y, e.box.w, e.box.h, 1.0)
            for t in tracklets for e in t.history]
    rows.sort(key=lambda r: (r.frame, r.id))
    return rows


def write_results(path: str | os.PathLike, tracklets: Sequence[Tracklet]) -> list[MotRow]:
    """One row per (frame, id), interpolated rows included, sorted by frame then id."""
    rows = tracklet_rows(tracklets)
    write_mot(path, rows)
    return rows


def table_rows(table: TrackTable, conf: float = 1.0) -> list[MotRow]:
    return [MotRow(r.frame, r.id, r.box.x, r.box.y, r.box.w, r.box.h, conf) for r in table]


# ---------------------------------------------------------------------------
# tensor sidecars: header "d1 d2 d3" then row-major values


def format_tensor(arr: np.ndarray) -> str:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"sidecar tensors are 3-D, got shape {arr.shape}")
    lines = [" ".join(str(d) for d in arr.shape)]
    flat = arr.reshape(-1, arr.shape[-1])
    lines.extend(" ".join(repr(float(v)) for v in row) for row in flat)
    return "\n".join(lines) + "\n"


def write_tensor(path: str | os.PathLike, arr: np.ndarray) -> None:
    atomic_write(path, format_tensor(arr))


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    lines = [ln for ln in _read_lines(path) if ln.strip()]
    if not lines:
        raise FormatError("empty tensor file", path)
    try:
        shape = tuple(int(t) for t in lines[0].split())
    except ValueError:
        raise FormatError("tensor header must hold integer dimensions", path, 1) from None
    if len(shape) != 3 or any(d < 0 for d in shape):
        raise FormatError(f"tensor header must be 'H W C', got {lines[0]!r}", path, 1)
    try:
        values = np.array([float(t) for ln in lines[1:] for t in ln.split()])
    except ValueError:
        raise FormatError("non-numeric tensor value", path) from None
    if values.size != int(np.prod(shape)):
        raise FormatError(f"header promises {int(np.prod(shape))} values, found {values.size}", path)
    if not np.all(np.isfinite(values)):
        raise FormatError("non-finite tensor value", path)
    return values.reshape(shape)


def read_embeddings(path: str | os.PathLike, count: int) -> list[np.ndarray]:
    """Per-detection embeddings stored as an ``N 1 C`` tensor, one per det-file row."""
    t = read_tensor(path)
    if t.shape[0] != count or t.shape[1] != 1:
        raise FormatError(f"expected a {count} x 1 x C embedding tensor, got {t.shape}", path)
    return [t[i, 0] for i in range(count)]


def read_projection(path: str | os.PathLike) -> np.ndarray:
    """Local-neck weights stored as a ``C 6C 1`` tensor."""
    t = read_tensor(path)
    if t.shape[2] != 1 or t.shape[1] != 6 * t.shape[0]:
        raise FormatError(f"projection must be C x 6C x 1, got {t.shape}", path)
    return t[:, :, 0]


def read_maps(directory: str | os.PathLike, index: int) -> tuple[np.ndarray, KeypointHeatmaps] | None:
    """Feature map and keypoint heatmaps for det-file row ``index`` if both files exist."""
    d = Path(directory)
    feat, heat = d / f"{index}.feat", d / f"{index}.heat"
    if not feat.exists() and not heat.exists():
        return None
    if not (feat.exists() and heat.exists()):
        raise FormatError(f"row {index} needs both .feat and .heat files", directory)
    f = read_tensor(feat)
    h = read_tensor(heat)
    if h.shape[:2] != f.shape[:2]:
        raise FormatError(f"row {index}: feature map and heatmaps differ spatially", directory)
    try:
        return f, KeypointHeatmaps.from_maps(h)
    except ValueError as exc:
        raise FormatError(f"row {index}: {exc}", directory) from None


def attach_sidecars(rows: Sequence[MotRow], observations: Sequence[FrameObservations],
                    embeddings: str | os.PathLike | None = None,
                    maps_dir: str | os.PathLike | None = None) -> None:
    """Fill detections (grouped by :func:`rows_to_observations`) with appearance inputs."""
    by_frame = {o.frame: o.detections for o in observations}
    cursor: dict[int, int] = {}
    order = []
    for i, r in enumerate(rows):
        k = cursor.get(r.frame, 0)
        cursor[r.frame] = k + 1
        order.append(by_frame[r.frame][k])
    if embeddings is not None:
        for det, e in zip(order, read_embeddings(embeddings, len(rows))):
            det.embedding = e
    if maps_dir is not None:
        for i, det in enumerate(order):
            got = read_maps(maps_dir, i)
            if got is not None:
                det.feature_map, det.heatmaps = got


# ---------------------------------------------------------------------------
# warps: line n holds the 2x3 warp from frame n to n + 1


def read_warps(path: str | os.PathLike) -> dict[int, np.ndarray]:
    """Return ``{k: warp}`` where ``warp`` maps frame ``k - 1`` to frame ``k``."""
    warps = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        toks = line.replace(",", " ").split()
        if not toks:
            continue
        if len(toks) != 6:
            raise FormatError(f"expected 6 values, found {len(toks)}", path, lineno)
        try:
            vals = np.array([float(t) for t in toks])
        except ValueError:
            raise FormatError("non-numeric warp value", path, lineno) from None
        if not np.all(np.isfinite(vals)):
            raise FormatError("non-finite warp value", path, lineno)
        warps[lineno + 1] = vals.reshape(2, 3)
    return warps


def write_warps(path: str | os.PathLike, warps: Sequence[np.ndarray]) -> None:
    atomic_write(path, "".join(" ".join(repr(float(v)) for v in np.asarray(w).reshape(-1)) + "\n"
                               for w in warps))


# ---------------------------------------------------------------------------
# flat key=value run configuration


@dataclass(frozen=True)
class RunConfig:
    """Tracker parameters, ablation toggles and file locations for one run."""

    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    odm: bool = True
    det: str = ""
    embeddings: str = ""
    maps: str = ""
    warps: str = ""
    projection: str = ""
    gt: str = ""
    results: str = ""
    scenario: str = "cross"
    seed: int = 0
    interpolate: bool = True

    def effective_tracker(self) -> TrackerConfig:
        """Tracker config with the ODM toggle applied (off means no threshold offset)."""
        return self.tracker if self.odm else dataclasses.replace(self.tracker, offset=0.0)


_TRACKER_FIELDS = {f.name: f for f in dataclasses.fields(TrackerConfig)}
_RUN_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "tracker"}


def _coerce(key: str, raw: str, default):
    kind = type(default)
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"{key}: expected an integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"{key}: expected a number, got {raw!r}") from None
    if issubclass(kind, enum.Enum):
        try:
            return kind(raw.strip())
        except ValueError:
            choices = ", ".join(m.value for m in kind)
            raise ValueError(f"{key}: expected one of {choices}, got {raw!r}") from None
    return raw.strip()


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, float):
        return repr(v)
    return str(v)


def config_from_pairs(pairs: Iterable[tuple[str, str]], base: RunConfig | None = None) -> RunConfig:
    """Apply ``key=value`` pairs on top of ``base``; unknown keys raise ``ValueError``."""
    base = base or RunConfig()
    tracker_kw = {k: getattr(base.tracker, k) for k in _TRACKER_FIELDS}
    run_kw = {k: getattr(base, k) for k in _RUN_FIELDS}
    for key, raw in pairs:
        if key in _TRACKER_FIELDS:
            tracker_kw[key] = _coerce(key, raw, tracker_kw[key])
        elif key in _RUN_FIELDS:
            run_kw[key] = _coerce(key, raw, run_kw[key])
        else:
            raise ValueError(f"unknown config key {key!r}")
    return RunConfig(tracker=TrackerConfig(**tracker_kw), **run_kw)


def split_pair(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ValueError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def parse_config_text(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            pairs.append(split_pair(line))
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return config_from_pairs(pairs, base)


def load_config(path: str | os.PathLike, base: RunConfig | None = None) -> RunConfig:
    return parse_config_text("\n".join(_read_lines(path)), base, str(path))


def format_config(cfg: RunConfig) -> str:
    lines = [f"{k}={_format_value(getattr(cfg.tracker, k))}" for k in _TRACKER_FIELDS]
    lines += [f"{k}={_format_value(getattr(cfg, k))}" for k in _RUN_FIELDS]
    return "\n".join(lines) + "\n"


def save_config(path: str | os.PathLike, cfg: RunConfig) -> None:
    atomic_write(path, format_config(cfg))


# ---------------------------------------------------------------------------
# reports and plot data


def format_report(report: MetricsReport) -> str:
    out = []
    for k, v in report.as_dict().items():
        out.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return "\n".join(out) + "\n"


def write_report(path: str | os.PathLike, report: MetricsReport) -> None:
    atomic_write(path, format_report(report))


def write_events(path: str | os.PathLike, report: MetricsReport) -> None:
    lines = ["frame,event,gt_id,pred_id"] + [f"{f},{kind},{g},{p}" for f, kind, g, p in report.events]
    atomic_write(path, "\n".join(lines) + "\n")


def format_plotdata(rows: Sequence[MotRow]) -> str:
    """Per-track polylines: one CSV line per (id, frame) with the box center."""
    lines = ["id,frame,cx,cy,w,h"]
    for r in sorted(rows, key=lambda r: (r.id, r.frame)):
        lines.append(f"{r.id},{r.frame},{_fmt(r.x + r.w / 2)},{_fmt(r.y + r.h / 2)},{_fmt(r.w)},{_fmt(r.h)}")
    return "\n".join(lines) + "\n"


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)
    return "\n".join([",".join(header)] + [",".join(cell(v) for v in r) for r in rows]) + "\n"


# ---------------------------------------------------------------------------
# simulation export


def export_simulation(sim: Simulation, directory: str | os.PathLike) -> dict[str, Path]:
    """Write ``gt.txt``, ``det.txt`` and the appearance/visibility sidecars.

    Sidecar row ``i`` belongs to line ``i`` (0-based) of ``det.txt``.
    ``det_agents.txt`` records the generating agent of each detection.
    """
    d = Path(directory)
    out = {"gt": d / "gt.txt", "det": d / "det.txt", "visibility": d / "visibility.txt",
           "agents": d / "det_agents.txt"}
    write_mot(out["gt"], table_rows(sim.gt))
    det_rows, embs, vis, agents = [], [], [], []
    maps = []
    for fr in sim.frames:
        for det, aid, pv in zip(fr.detections, fr.det_agent, fr.part_visibility):
            det_rows.append(MotRow(fr.frame, -1, det.box.x, det.box.y, det.box.w, det.box.h, det.score))
            agents.append(aid)
            vis.append(pv)
            if det.embedding is not None:
                embs.append(det.embedding)
            if det.feature_map is not None:
                maps.append((det.feature_map, det.heatmaps.data))
    write_mot(out["det"], det_rows)
    write_tensor(out["visibility"], np.asarray(vis, dtype=float).reshape(len(vis), 1, 6))
    atomic_write(out["agents"], "".join(f"{a}\n" for a in agents))
    if embs:
        out["embeddings"] = d / "embeddings.txt"
        write_tensor(out["embeddings"], np.asarray(embs).reshape(len(embs), 1, -1))
    if maps:
        out["maps"] = d / "maps"
        for i, (f, h) in enumerate(maps):
            write_tensor(out["maps"] / f"{i}.feat", f)
            write_tensor(out["maps"] / f"{i}.heat", h)
    return out
