"""Seeded synthetic pedestrian scenes with depth-ordered rectangular occlusion.

Each agent is a box moving with a piecewise-constant velocity.  On every frame
an agent's visible region is its box minus the boxes of nearer agents.  The
emitted detection is the bounding box of that region plus pixel noise, or
nothing when too little is visible.  Scores and appearance inputs degrade with
the occluded fraction, so occluded pedestrians produce low-score, clipped
boxes with mixed appearance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .appearance import NUM_KEYPOINTS, PART_GROUPS, KeypointHeatmaps, normalize
from .geometry import BoundingBox, CenterBox, center_to_tlwh
from .metrics import TrackRow, TrackTable
from .tracker import Detection, FrameObservations

SUITES = ("cross", "follow", "linger", "crowd")
APPEARANCE_MODES = ("latent", "maps")
CLIPPING_MODES = ("visible", "none")

# Canonical COCO-17 keypoint layout inside a person box, (u, v) in [0, 1];
# u grows to the image right, v grows downward.
KEYPOINT_LAYOUT = np.array([
    (0.50, 0.08), (0.56, 0.06), (0.44, 0.06), (0.62, 0.08), (0.38, 0.08),
    (0.72, 0.22), (0.28, 0.22), (0.80, 0.38), (0.20, 0.38), (0.82, 0.52), (0.18, 0.52),
    (0.63, 0.52), (0.37, 0.52), (0.63, 0.73), (0.37, 0.73), (0.63, 0.94), (0.37, 0.94),
])

PARTIAL_EVENT_VISIBILITY = 0.8


@dataclass(frozen=True)
class AgentSpec:
    """One pedestrian.  ``schedule`` holds ``(start_frame, (vcx, vcy, vw, vh))``
    pairs; the velocity active on frame t moves the box from t to t + 1.
    Smaller ``depth`` means nearer to the camera."""

    agent_id: int
    box: CenterBox
    schedule: tuple[tuple[int, tuple[float, float, float, float]], ...]
    depth: float
    latent: tuple[float, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    duration: int
    agents: tuple[AgentSpec, ...]
    image_size: tuple[float, float] = (1280.0, 720.0)
    det_noise_std: float = 1.0
    v_full: float = 0.25
    clipping: str = "visible"
    emb_noise_std: float = 0.05
    appearance: str = "latent"
    map_shape: tuple[int, int] = (16, 8)
    name: str = "custom"

    def validate(self) -> None:
        if self.duration < 1:
            raise ValueError("duration must be at least 1")
        depths = [a.depth for a in self.agents]
        if len(set(depths)) != len(depths):
            raise ValueError("agent depths must be unique")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids) or any(i < 1 for i in ids):
            raise ValueError("agent ids must be unique positive integers")
        dims = {len(a.latent) for a in self.agents}
        if len(dims) > 1:
            raise ValueError("all agent latents must share one dimension")
        for a in self.agents:
            if not math.isclose(float(np.linalg.norm(a.latent)), 1.0, rel_tol=1e-6):
                raise ValueError(f"agent {a.agent_id} latent is not unit length")
            if not a.schedule or a.schedule[0][0] != 1:
                raise ValueError(f"agent {a.agent_id} schedule must start at frame 1")
            starts = [s for s, _ in a.schedule]
            if starts != sorted(set(starts)):
                raise ValueError(f"agent {a.agent_id} schedule frames must increase")
        if not 0.0 <= self.v_full <= 1.0:
            raise ValueError("v_full must lie in [0, 1]")
        if self.det_noise_std < 0 or self.emb_noise_std < 0:
            raise ValueError("noise std must be nonnegative")
        if self.clipping not in CLIPPING_MODES:
            raise ValueError(f"unknown clipping mode {self.clipping!r}")
        if self.appearance not in APPEARANCE_MODES:
            raise ValueError(f"unknown appearance mode {self.appearance!r}")


@dataclass
class SimulatedFrame:
    frame: int
    gt: list[tuple[int, BoundingBox]]
    detections: list[Detection]
    det_agent: list[int]
    visibility: list[float]
    part_visibility: list[np.ndarray]
    visible_boxes: list[BoundingBox]
    agent_visibility: dict[int, float] = field(default_factory=dict)

    def observations(self) -> FrameObservations:
        return FrameObservations(self.frame, list(self.detections))


@dataclass
class Simulation:
    spec: ScenarioSpec
    frames: list[SimulatedFrame]
    gt: TrackTable

    def observations(self) -> list[FrameObservations]:
        return [f.observations() for f in self.frames]

    def detection_gaps(self) -> dict[int, int]:
        """Longest run of frames without a detection, per agent, while the agent is in view."""
        longest: dict[int, int] = {}
        run: dict[int, int] = {}
        for fr in self.frames:
            seen = set(fr.det_agent)
            for aid, _ in fr.gt:
                run[aid] = 0 if aid in seen else run.get(aid, 0) + 1
                longest[aid] = max(longest.get(aid, 0), run[aid])
        return longest

    def partial_occlusion_events(self, threshold: float = PARTIAL_EVENT_VISIBILITY) -> int:
        """Number of maximal per-agent runs of frames with visibility below ``threshold``."""
        events = 0
        below: dict[int, bool] = {}
        for fr in self.frames:
            for aid, v in fr.agent_visibility.items():
                now = v < threshold
                if now and not below.get(aid, False):
                    events += 1
                below[aid] = now
            for aid in list(below):
                if aid not in fr.agent_visibility:
                    below[aid] = False
        return events


def agent_boxes(agent: AgentSpec, duration: int) -> np.ndarray:
    """Center-form box of the agent on frames 1..duration, shape (duration, 4)."""
    out = np.empty((duration, 4))
    cur = agent.box.to_array()
    sched = list(agent.schedule)
    k = 0
    for t in range(1, duration + 1):
        out[t - 1] = cur
        while k + 1 < len(sched) and sched[k + 1][0] <= t:
            k += 1
        cur = cur + np.asarray(sched[k][1], dtype=float)
    return out


def _inside(box: BoundingBox, size: tuple[float, float]) -> bool:
    return box.x >= 0 and box.y >= 0 and box.x2 <= size[0] and box.y2 <= size[1]


def visible_region(box: BoundingBox, occluders: Sequence[BoundingBox]):
    """Exact visibility of ``box`` behind ``occluders`` (nearest first).

    Returns ``(visible_fraction, visible_bbox or None, covered_fraction_per_occluder)``.
    Overlapping occluder area is credited to the nearest occluder.
    """
    clipped = []
    for o in occluders:
        x1, x2 = max(o.x, box.x), min(o.x2, box.x2)
        y1, y2 = max(o.y, box.y), min(o.y2, box.y2)
        clipped.append((x1, y1, x2, y2) if x2 > x1 and y2 > y1 else None)
    live = [c for c in clipped if c is not None]
    if not live:
        return 1.0, box, [0.0] * len(occluders)
    xs = np.unique(np.array([box.x, box.x2] + [c[0] for c in live] + [c[2] for c in live]))
    ys = np.unique(np.array([box.y, box.y2] + [c[1] for c in live] + [c[3] for c in live]))
    xm = 0.5 * (xs[:-1] + xs[1:])
    ym = 0.5 * (ys[:-1] + ys[1:])
    cell_area = np.outer(np.diff(ys), np.diff(xs))
    owner = np.full(cell_area.shape, -1)
    for k, c in enumerate(clipped):
        if c is None:
            continue
        inside = np.outer((ym > c[1]) & (ym < c[3]), (xm > c[0]) & (xm < c[2]))
        owner[(owner < 0) & inside] = k
    total = box.area
    covered = [float(cell_area[owner == k].sum() / total) for k in range(len(occluders))]
    free = owner < 0
    vis = float(cell_area[free].sum() / total)
    if not free.any():
        return 0.0, None, covered
    rows, cols = np.nonzero(free)
    vbox = BoundingBox.from_xyxy(float(xs[cols.min()]), float(ys[rows.min()]),
                                 float(xs[cols.max() + 1]), float(ys[rows.max() + 1]))
    return min(vis, 1.0), vbox, covered


def _point_covered(px: float, py: float, occluders: Sequence[BoundingBox]) -> int:
    for k, o in enumerate(occluders):
        if o.x < px < o.x2 and o.y < py < o.y2:
            return k
    return -1


def keypoint_visibility(box: BoundingBox, occluders: Sequence[BoundingBox]) -> np.ndarray:
    pts = np.column_stack([box.x + KEYPOINT_LAYOUT[:, 0] * box.w, box.y + KEYPOINT_LAYOUT[:, 1] * box.h])
    return np.array([_point_covered(px, py, occluders) < 0 for px, py in pts])


def render_appearance(box: BoundingBox, latent: np.ndarray, occluders: Sequence[BoundingBox],
                      occluder_latents: Sequence[np.ndarray], shape: tuple[int, int], noise_std: float,
                      rng: np.random.Generator) -> tuple[np.ndarray, KeypointHeatmaps]:
    """Feature map and keypoint heatmaps over the agent's full extent.

    Cells whose centers lie under a nearer agent carry that agent's latent;
    keypoints under an occluder produce no heat.
    """
    hh, ww = shape
    cy = box.y + (np.arange(hh) + 0.5) / hh * box.h
    cx = box.x + (np.arange(ww) + 0.5) / ww * box.w
    owner = np.full((hh, ww), -1)
    for k, o in enumerate(occluders):
        inside = np.outer((cy > o.y) & (cy < o.y2), (cx > o.x) & (cx < o.x2))
        owner[(owner < 0) & inside] = k
    latents = np.stack([latent] + list(occluder_latents)) if occluder_latents else latent[None, :]
    fmap = latents[owner + 1] + noise_std * rng.standard_normal((hh, ww, latent.shape[0]))
    fmap = np.abs(fmap)  # feature maps are nonnegative activations

    own = (owner < 0).astype(float)
    gy = (np.arange(hh) + 0.5)[:, None]
    gx = (np.arange(ww) + 0.5)[None, :]
    heat = np.zeros((hh, ww, NUM_KEYPOINTS))
    visible = keypoint_visibility(box, occluders)
    for k in range(NUM_KEYPOINTS):
        if not visible[k]:
            continue
        u, v = KEYPOINT_LAYOUT[k]
        d2 = (gx - u * ww) ** 2 + (gy - v * hh) ** 2
        heat[..., k] = np.exp(-0.5 * d2) * own
    return fmap, KeypointHeatmaps.from_maps(heat)


def generate(spec: ScenarioSpec) -> Simulation:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    agents = sorted(spec.agents, key=lambda a: a.agent_id)
    tracks = {a.agent_id: agent_boxes(a, spec.duration) for a in agents}
    latents = {a.agent_id: np.asarray(a.latent, dtype=float) for a in agents}
    depth = {a.agent_id: a.depth for a in agents}
    gt_rows: list[TrackRow] = []
    frames: list[SimulatedFrame] = []
    w_img, h_img = spec.image_size

    for t in range(1, spec.duration + 1):
        present: dict[int, BoundingBox] = {}
        for a in agents:
            c = tracks[a.agent_id][t - 1]
            if c[2] <= 0 or c[3] <= 0:
                continue
            b = center_to_tlwh(CenterBox(*map(float, c)))
            if _inside(b, spec.image_size):
                present[a.agent_id] = b
        gt = sorted(present.items())
        gt_rows.extend(TrackRow(t, aid, b) for aid, b in gt)
        frame = SimulatedFrame(t, gt, [], [], [], [], [])

        for aid, b in gt:
            near = sorted((o for o in present if depth[o] < depth[aid]), key=lambda o: depth[o])
            occ_boxes = [present[o] for o in near]
            vis, vbox, covered = visible_region(b, occ_boxes)
            frame.agent_visibility[aid] = vis
            # Noise is drawn for every present agent so dropping a detection
            # does not shift the random stream of later agents.
            box_noise = spec.det_noise_std * rng.standard_normal(4)
            if spec.appearance == "latent":
                emb_noise = spec.emb_noise_std * rng.standard_normal(latents[aid].shape[0])
            if vis < spec.v_full or vbox is None:
                if spec.appearance == "maps":
                    rng.standard_normal((*spec.map_shape, latents[aid].shape[0]))
                continue
            base = vbox if spec.clipping == "visible" else b
            arr = base.to_array() + box_noise
            x1 = min(max(arr[0], 0.0), w_img - 1.0)
            y1 = min(max(arr[1], 0.0), h_img - 1.0)
            x2 = min(max(arr[0] + arr[2], x1 + 1.0), w_img)
            y2 = min(max(arr[1] + arr[3], y1 + 1.0), h_img)
            det_box = BoundingBox.from_xyxy(x1, y1, x2, y2)
            score = float(np.clip(vis, 0.5, 0.99))

            kp_vis = keypoint_visibility(b, occ_boxes)
            part_vis = np.array([vis * kp_vis[list(g)].mean() for g in PART_GROUPS])
            if spec.appearance == "latent":
                mix = vis * latents[aid]
                for o, share in zip(near, covered):
                    mix = mix + share * latents[o]
                det = Detection(det_box, score, embedding=normalize(mix + emb_noise))
            else:
                fmap, heat = render_appearance(b, latents[aid], occ_boxes, [latents[o] for o in near],
                                               spec.map_shape, spec.emb_noise_std, rng)
                det = Detection(det_box, score, feature_map=fmap, heatmaps=heat)
            frame.detections.append(det)
            frame.det_agent.append(aid)
            frame.visibility.append(vis)
            frame.part_visibility.append(part_vis)
            frame.visible_boxes.append(vbox)
        frames.append(frame)

    return Simulation(spec, frames, TrackTable(gt_rows))


# ---------------------------------------------------------------------------
# canned scenario families

LATENT_DIM = 32
# Closing speed of crossing pedestrians, as a fraction of the far one's width per frame.
REL_SPEED = (0.42, 0.50)
# Frame on which crossing boxes first touch.
T_CONTACT = 30
ASPECT = 2.6


def _latents(rng: np.random.Generator, n: int, dim: int = LATENT_DIM) -> list[tuple[float, ...]]:
    out = []
    for _ in range(n):
        v = rng.standard_normal(dim)
        out.append(tuple(float(x) for x in v / np.linalg.norm(v)))
    return out


def _vel(vx: float, vy: float = 0.0) -> tuple[float, float, float, float]:
    return (float(vx), float(vy), 0.0, 0.0)


def _cross(rng: np.random.Generator, seed: int) -> ScenarioSpec:
    # A far pedestrian passes behind a near one walking the other way.  The
    # boxes touch exactly on frame T_CONTACT, so the far one is clipped on a
    # single frame before it disappears, then hidden for ten frames.
    w_r = rng.uniform(26.0, 34.0)
    rel = rng.uniform(*REL_SPEED) * w_r
    w_f = 10.0 * rel + 0.5 * w_r
    h_r, h_f = ASPECT * w_r, ASPECT * w_f
    v_r = rel * rng.uniform(0.35, 0.6)
    v_f = rel - v_r
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    vy_r, vy_f = rng.uniform(-0.2, 0.2, size=2)
    duration = 90
    x_r0 = 640.0 + rng.uniform(-40, 40) - sign * v_r * (T_CONTACT - 1)
    offset0 = sign * (0.5 * (w_f + w_r) + rel * (T_CONTACT - 1))
    feet_r = 470.0 + rng.uniform(-20, 20)
    feet_f = feet_r + rng.uniform(25.0, 60.0)
    rear = CenterBox(x_r0, feet_r - h_r / 2, w_r, h_r)
    front = CenterBox(x_r0 + offset0, feet_f - h_f / 2, w_f, h_f)
    lat = _latents(rng, 2)
    agents = (
        AgentSpec(1, rear, ((1, _vel(sign * v_r, vy_r)),), 2.0, lat[0]),
        AgentSpec(2, front, ((1, _vel(-sign * v_f, vy_f)),), 1.0, lat[1]),
    )
    return ScenarioSpec(seed, duration, agents, name="cross")


def _linger(rng: np.random.Generator, seed: int) -> ScenarioSpec:
    # A near pedestrian sweeps in front of a far one, walks alongside it for a
    # while, then moves on: the far one stays hidden for 30+ frames while its
    # own motion never changes.
    w_r = rng.uniform(26.0, 34.0)
    rel = rng.uniform(*REL_SPEED) * w_r
    w_f = rng.uniform(2.0, 2.5) * w_r
    h_r, h_f = ASPECT * w_r, ASPECT * w_f
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    v_r = sign * rng.uniform(1.0, 2.5)
    t_meet = T_CONTACT + int(round(0.5 * (w_f + w_r) / rel))
    hold = 32 - (t_meet - T_CONTACT)
    duration = t_meet + hold + 45
    feet_r = 470.0 + rng.uniform(-20, 20)
    feet_f = feet_r + rng.uniform(25.0, 60.0)
    x_r0 = 640.0 - v_r * (t_meet - 1) - v_r * hold / 2
    offset0 = sign * (0.5 * (w_f + w_r) + rel * (T_CONTACT - 1))
    rear = CenterBox(x_r0, feet_r - h_r / 2, w_r, h_r)
    front = CenterBox(x_r0 + offset0, feet_f - h_f / 2, w_f, h_f)
    front_sched = (
        (1, _vel(v_r - sign * rel)),
        (t_meet, _vel(v_r)),
        (t_meet + hold, _vel(v_r - sign * rel)),
    )
    lat = _latents(rng, 2)
    agents = (
        AgentSpec(1, rear, ((1, _vel(v_r)),), 2.0, lat[0]),
        AgentSpec(2, front, front_sched, 1.0, lat[1]),
    )
    return ScenarioSpec(seed, duration, agents, name="linger")


def _follow(rng: np.random.Generator, seed: int) -> ScenarioSpec:
    # A far pedestrian walks just behind a near one; the near one drifts back
    # and forth so the far one is 0-45% covered for most of the sequence.
    w_r = rng.uniform(28.0, 34.0)
    w_f = rng.uniform(1.3, 1.6) * w_r
    h_r, h_f = ASPECT * w_r, ASPECT * w_f
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    v = sign * rng.uniform(1.0, 2.0)
    duration = 120
    feet_r = 470.0 + rng.uniform(-20, 20)
    feet_f = feet_r + rng.uniform(25.0, 60.0)
    touching = 0.5 * (w_f + w_r)
    far = touching + 6.0
    near = touching - 0.45 * w_r
    period = int(rng.integers(24, 36))
    drift = (far - near) / (period / 2)
    x_r0 = 640.0 - v * duration / 2
    rear = CenterBox(x_r0, feet_r - h_r / 2, w_r, h_r)
    # The near pedestrian leads (ahead in the walking direction).
    front = CenterBox(x_r0 + sign * far, feet_f - h_f / 2, w_f, h_f)
    sched = []
    t, closing = 1, True
    while t <= duration:
        sched.append((t, _vel(v - sign * drift if closing else v + sign * drift)))
        t += period // 2
        closing = not closing
    lat = _latents(rng, 2)
    agents = (
        AgentSpec(1, rear, ((1, _vel(v)),), 2.0, lat[0]),
        AgentSpec(2, front, tuple(sched), 1.0, lat[1]),
    )
    return ScenarioSpec(seed, duration, agents, name="follow", appearance="maps")


def _crowd(rng: np.random.Generator, seed: int, n: int = 12) -> ScenarioSpec:
    w_img, h_img = 1280.0, 720.0
    duration = 150
    margin = 8.0
    feet = rng.permutation(np.linspace(380.0, 660.0, n)) + rng.uniform(-4, 4, size=n)
    lat = _latents(rng, n)
    agents = []
    for k in range(n):
        h = 0.3 * feet[k] - 30.0
        w = h / ASPECT
        x = rng.uniform(margin + w, w_img - margin - w)
        vx = rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 4.0)
        vy = rng.uniform(-0.15, 0.15)
        turn = int(rng.integers(40, 110)) if rng.uniform() < 0.5 else duration + 1
        vx_late = vx * rng.uniform(0.3, 1.5)
        # Reverse horizontal motion at the image border.
        sched = []
        cx, direction, prev = x, 1.0, None
        for t in range(1, duration + 1):
            step = direction * (vx if t < turn else vx_late)
            if cx + step - w / 2 < margin or cx + step + w / 2 > w_img - margin:
                direction, step = -direction, -step
            v = _vel(step, vy)
            if v != prev:
                sched.append((t, v))
                prev = v
            cx += step
        box = CenterBox(x, feet[k] - h / 2, w, h)
        agents.append(AgentSpec(k + 1, box, tuple(sched), float(h_img - feet[k]), lat[k]))
    return ScenarioSpec(seed, duration, tuple(agents), image_size=(w_img, h_img), name="crowd")


_BUILDERS = {"cross": _cross, "follow": _follow, "linger": _linger, "crowd": _crowd}


def standard_suite(name: str, seed: int, **overrides) -> ScenarioSpec:
    """Canned scenario ``name`` with parameters drawn from ``seed``.

    Keyword overrides replace ScenarioSpec fields (e.g. ``appearance="latent"``).
    """
    try:
        build = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SUITES}") from None
    rng = np.random.default_rng([seed, 7919])
    spec = build(rng, seed)
    if overrides:
        spec = ScenarioSpec(**{**spec.__dict__, **overrides})
    spec.validate()
    return spec
