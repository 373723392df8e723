"""Constant-velocity Kalman filter with abnormal motion suppression (AMS).

State layout is ``[cx, cy, w, h, vcx, vcy, vw, vh]`` in pixels and pixels/frame.
Noise magnitudes scale with the box height, following the SORT family.

The suppression step compares the speed of a new observation with the
averaged speed of the buffered tracked boxes.  Components whose normalized
deviation exceeds ``theta_v`` get coefficient ``alpha0``; the mean of the four
coefficients scales the Kalman correction of the state mean.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .geometry import BoundingBox, CenterBox, center_to_tlwh, tlwh_to_center

NDIM = 4
MIN_SIZE = 1e-3


class DegenerateCovarianceError(ValueError):
    """Innovation covariance is not positive definite."""


class InsufficientHistoryError(ValueError):
    """Speed statistics need at least two buffered boxes."""


class FilterKind(str, enum.Enum):
    MEAN = "mean"
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"


def _transition_matrix() -> np.ndarray:
    a = np.eye(2 * NDIM)
    a[:NDIM, NDIM:] = np.eye(NDIM)
    return a


_A = _transition_matrix()
_A.setflags(write=False)
_H = np.eye(NDIM, 2 * NDIM)
_H.setflags(write=False)


@dataclass(frozen=True)
class KalmanModel:
    """Linear constant-velocity model.

    ``Q`` and ``R`` are diagonal with standard deviations proportional to the
    current box height; setting a weight to zero removes that noise source.
    """

    std_weight_position: float = 1.0 / 20
    std_weight_velocity: float = 1.0 / 160
    init_position_factor: float = 2.0
    init_velocity_factor: float = 10.0

    @property
    def A(self) -> np.ndarray:
        return _A

    @property
    def H(self) -> np.ndarray:
        return _H

    def _height(self, mean: np.ndarray) -> float:
        return max(abs(float(mean[3])), MIN_SIZE)

    def process_noise(self, mean: np.ndarray) -> np.ndarray:
        h = self._height(mean)
        std = np.r_[np.full(NDIM, self.std_weight_position * h), np.full(NDIM, self.std_weight_velocity * h)]
        return np.diag(np.square(std))

    def observation_noise(self, mean: np.ndarray) -> np.ndarray:
        h = self._height(mean)
        return np.diag(np.square(np.full(NDIM, self.std_weight_position * h)))

    def initial_covariance(self, h: float) -> np.ndarray:
        std = np.r_[
            np.full(NDIM, self.init_position_factor * self.std_weight_position * h),
            np.full(NDIM, self.init_velocity_factor * self.std_weight_velocity * h),
        ]
        return np.diag(np.square(std))


@dataclass
class KalmanTrackState:
    mean: np.ndarray
    covariance: np.ndarray

    def copy(self) -> "KalmanTrackState":
        return KalmanTrackState(self.mean.copy(), self.covariance.copy())

    def to_box(self) -> BoundingBox:
        """Current position estimate as a tlwh box (sizes floored at a tiny positive value)."""
        cx, cy, w, h = self.mean[:4]
        return center_to_tlwh(CenterBox(float(cx), float(cy), max(float(w), MIN_SIZE), max(float(h), MIN_SIZE)))


def kf_init(b: BoundingBox, model: KalmanModel) -> KalmanTrackState:
    mean = np.r_[tlwh_to_center(b).to_array(), np.zeros(NDIM)]
    return KalmanTrackState(mean, model.initial_covariance(b.h))


def kf_predict(st: KalmanTrackState, model: KalmanModel) -> KalmanTrackState:
    a = model.A
    q = model.process_noise(st.mean)
    mean = a @ st.mean
    cov = a @ st.covariance @ a.T + q
    return KalmanTrackState(mean, cov)


def kf_update(st: KalmanTrackState, z: BoundingBox, alpha: float, model: KalmanModel) -> KalmanTrackState:
    """Measurement update with the mean correction scaled by ``alpha``.

    The covariance contracts with the unscaled gain.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    h = model.H
    s = h @ st.covariance @ h.T + model.observation_noise(st.mean)
    s = 0.5 * (s + s.T)
    try:
        chol = scipy.linalg.cho_factor(s, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("innovation covariance is singular") from exc
    # G = P H^T S^-1, solved as S G^T = H P
    gain = scipy.linalg.cho_solve(chol, h @ st.covariance, check_finite=False).T
    innovation = tlwh_to_center(z).to_array() - h @ st.mean
    mean = st.mean + alpha * (gain @ innovation)
    cov = st.covariance - gain @ s @ gain.T
    cov = 0.5 * (cov + cov.T)
    return KalmanTrackState(mean, cov)


def accumulated_error(error: np.ndarray, tau: int) -> np.ndarray:
    """Closed form of ``A**tau @ error`` for the constant-velocity transition."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    e = np.asarray(error, dtype=float)
    out = e.copy()
    out[:NDIM] = e[:NDIM] + tau * e[NDIM:]
    return out


class SpeedBuffer:
    """Ring of the most recent ``capacity`` tracked boxes, oldest first.

    Boxes are stored in center form so speeds are measured in the same
    coordinates as the Kalman state they are compared against.
    """

    def __init__(self, n: int = 30):
        if n < 2:
            raise ValueError("buffer length N must be at least 2")
        self.n = n
        self._items: deque[tuple[int, np.ndarray]] = deque(maxlen=n + 1)

    @property
    def capacity(self) -> int:
        return self.n + 1

    def __len__(self) -> int:
        return len(self._items)

    def push(self, frame: int, box: BoundingBox) -> None:
        if self._items and frame <= self._items[-1][0]:
            raise ValueError(f"frame {frame} not after last buffered frame {self._items[-1][0]}")
        self._items.append((frame, tlwh_to_center(box).to_array()))

    def clear(self) -> None:
        self._items.clear()

    @property
    def frames(self) -> list[int]:
        return [f for f, _ in self._items]

    def boxes(self) -> np.ndarray:
        """Buffered boxes as an (n, 4) center-form array."""
        if not self._items:
            return np.zeros((0, 4))
        return np.stack([b for _, b in self._items])

    def last(self) -> np.ndarray:
        if not self._items:
            raise InsufficientHistoryError("empty speed buffer")
        return self._items[-1][1]


def gaussian_weights(n: int) -> np.ndarray:
    """Causal Gaussian kernel over ``n`` samples (oldest first), std ``n / 4``, unit sum."""
    dist = np.arange(n - 1, -1, -1, dtype=float)
    sigma = max(n / 4.0, 1e-12)
    w = np.exp(-0.5 * (dist / sigma) ** 2)
    return w / w.sum()


def laplacian_weights(n: int) -> np.ndarray:
    """Weights decaying as ``exp(-d / 2)`` with distance ``d`` to the newest sample, unit sum."""
    dist = np.arange(n - 1, -1, -1, dtype=float)
    w = np.exp(-dist / 2.0)
    return w / w.sum()


def filter_speeds(buf: SpeedBuffer, kind: FilterKind | str = FilterKind.MEAN) -> np.ndarray:
    """Average per-frame speed of the buffered boxes.

    Uses the ``N`` most recent boxes, i.e. ``N - 1`` first differences.
    """
    kind = FilterKind(kind)
    boxes = buf.boxes()
    if len(boxes) < 2:
        raise InsufficientHistoryError(f"need at least 2 buffered boxes, have {len(boxes)}")
    speeds = np.diff(boxes[-buf.n:], axis=0)
    if kind is FilterKind.MEAN:
        return speeds.mean(axis=0)
    if kind is FilterKind.GAUSSIAN:
        weights = gaussian_weights(len(speeds))
    else:
        weights = laplacian_weights(len(speeds))
    return weights @ speeds


def speed_difference(buf: SpeedBuffer, current: BoundingBox, kind: FilterKind | str = FilterKind.MEAN) -> np.ndarray:
    """Per-component ``|v_k - v_mean|`` normalized by the last buffered width/height."""
    avg = filter_speeds(buf, kind)
    last = buf.last()
    v = tlwh_to_center(current).to_array() - last
    scale = np.array([last[2], last[3], last[2], last[3]])
    return np.abs(v / scale - avg / scale)


@dataclass(frozen=True)
class SuppressionCoefficients:
    alpha_x: float
    alpha_y: float
    alpha_w: float
    alpha_h: float

    @property
    def alpha(self) -> float:
        return (self.alpha_x + self.alpha_y + self.alpha_w + self.alpha_h) / 4.0


def suppression_coefficients(d: np.ndarray, theta_v: float, alpha0: float) -> SuppressionCoefficients:
    if theta_v < 0:
        raise ValueError("theta_v must be nonnegative")
    if not 0.0 <= alpha0 <= 1.0:
        raise ValueError("alpha0 must lie in [0, 1]")
    coeffs = [1.0 if di <= theta_v else alpha0 for di in np.asarray(d, dtype=float)]
    return SuppressionCoefficients(*coeffs)


@dataclass(frozen=True)
class AMSConfig:
    enabled: bool = True
    alpha0: float = 0.2
    theta_v: float = 0.2
    buffer_size: int = 30
    filter_kind: FilterKind = FilterKind.MEAN


@dataclass
class MotionTrack:
    """Kalman state plus speed buffer for one target."""

    state: KalmanTrackState
    buffer: SpeedBuffer
    model: KalmanModel = field(default_factory=KalmanModel)
    ams: AMSConfig = field(default_factory=AMSConfig)
    last_alpha: float = 1.0

    @classmethod
    def start(cls, box: BoundingBox, frame: int, model: KalmanModel | None = None,
              ams: AMSConfig | None = None) -> "MotionTrack":
        model = model or KalmanModel()
        ams = ams or AMSConfig()
        buf = SpeedBuffer(ams.buffer_size)
        buf.push(frame, box)
        return cls(kf_init(box, model), buf, model, ams)

    def predict(self) -> None:
        self.state = kf_predict(self.state, self.model)

    def suppression(self, box: BoundingBox) -> float:
        if not self.ams.enabled or len(self.buffer) < 2:
            return 1.0
        d = speed_difference(self.buffer, box, self.ams.filter_kind)
        return suppression_coefficients(d, self.ams.theta_v, self.ams.alpha0).alpha

    def update(self, box: BoundingBox, frame: int) -> float:
        alpha = self.suppression(box)
        self.state = kf_update(self.state, box, alpha, self.model)
        self.buffer.push(frame, box)
        self.last_alpha = alpha
        return alpha

    def box(self) -> BoundingBox:
        return self.state.to_box()
