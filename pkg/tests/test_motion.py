import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occlusion_mot.geometry import BoundingBox, CenterBox, center_to_tlwh
from occlusion_mot.motion import (
    AMSConfig,
    DegenerateCovarianceError,
    FilterKind,
    InsufficientHistoryError,
    KalmanModel,
    KalmanTrackState,
    MotionTrack,
    SpeedBuffer,
    accumulated_error,
    filter_speeds,
    gaussian_weights,
    kf_init,
    kf_predict,
    kf_update,
    laplacian_weights,
    speed_difference,
    suppression_coefficients,
)

MODEL = KalmanModel()
NOISELESS = KalmanModel(std_weight_position=0.0, std_weight_velocity=0.0)


def state(mean, cov=None):
    mean = np.asarray(mean, dtype=float)
    return KalmanTrackState(mean, np.zeros((8, 8)) if cov is None else cov)


def random_state(rng):
    mean = np.r_[rng.uniform(0, 500, 2), rng.uniform(20, 200, 2), rng.normal(0, 2, 4)]
    a = rng.normal(size=(8, 8))
    return KalmanTrackState(mean, a @ a.T + np.eye(8))


def buffer_of(centers):
    buf = SpeedBuffer(30)
    for k, c in enumerate(centers, start=1):
        buf.push(k, center_to_tlwh(CenterBox(*c)))
    return buf


# -- init / predict ---------------------------------------------------------


def test_init_mean_and_covariance():
    st_ = kf_init(BoundingBox(0, 0, 10, 20), MODEL)
    np.testing.assert_array_equal(st_.mean, [5, 10, 10, 20, 0, 0, 0, 0])
    p = st_.covariance
    np.testing.assert_array_equal(p, p.T)
    assert np.linalg.eigvalsh(p).min() >= 0
    again = kf_init(BoundingBox(0, 0, 10, 20), MODEL)
    assert np.array_equal(p, again.covariance) and np.array_equal(st_.mean, again.mean)


def test_predict_unit_step():
    out = kf_predict(state([0, 0, 10, 10, 1, 2, 0, 0]), MODEL)
    np.testing.assert_array_equal(out.mean, [1, 2, 10, 10, 1, 2, 0, 0])


def test_predict_noiseless_zero_covariance_stays_zero():
    out = kf_predict(state([0, 0, 10, 10, 1, 2, 0, 0]), NOISELESS)
    np.testing.assert_array_equal(out.covariance, np.zeros((8, 8)))


def test_predict_rollout_matches_matrix_power(rng):
    a = NOISELESS.A
    for _ in range(20):
        m = rng.normal(size=8)
        tau = int(rng.integers(0, 40))
        st_ = state(m)
        for _ in range(tau):
            st_ = kf_predict(st_, NOISELESS)
        np.testing.assert_allclose(st_.mean, np.linalg.matrix_power(a, tau) @ m, rtol=1e-12, atol=1e-12)


# -- update -------------------------------------------------------------------


def reference_update(st_, z, model):
    """Textbook update with an explicit inverse."""
    h = model.H
    r = model.observation_noise(st_.mean)
    s = h @ st_.covariance @ h.T + r
    k = st_.covariance @ h.T @ np.linalg.inv(s)
    zc = np.array([z.x + z.w / 2, z.y + z.h / 2, z.w, z.h])
    mean = st_.mean + k @ (zc - h @ st_.mean)
    cov = (np.eye(8) - k @ h) @ st_.covariance
    return mean, cov


def test_update_alpha_one_is_standard_kalman(rng):
    for _ in range(50):
        st_ = random_state(rng)
        z = BoundingBox(*rng.uniform(0, 300, 2), *rng.uniform(20, 150, 2))
        out = kf_update(st_, z, 1.0, MODEL)
        mean, cov = reference_update(st_, z, MODEL)
        np.testing.assert_allclose(out.mean, mean, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(out.covariance, cov, rtol=1e-7, atol=1e-7)


def test_zero_innovation_leaves_mean(rng):
    st_ = random_state(rng)
    z = center_to_tlwh(CenterBox(*st_.mean[:4]))
    for alpha in (0.0, 0.2, 0.6, 1.0):
        np.testing.assert_allclose(kf_update(st_, z, alpha, MODEL).mean, st_.mean, atol=1e-9)


def test_suppressed_shift_is_scaled(rng):
    st_ = random_state(rng)
    z = BoundingBox(40, 50, 60, 120)
    full = kf_update(st_, z, 1.0, MODEL).mean - st_.mean
    part = kf_update(st_, z, 0.2, MODEL).mean - st_.mean
    np.testing.assert_allclose(part, 0.2 * full, rtol=1e-12, atol=1e-12)
    # the covariance does not depend on alpha
    np.testing.assert_array_equal(kf_update(st_, z, 0.2, MODEL).covariance,
                                  kf_update(st_, z, 1.0, MODEL).covariance)


def test_update_rejects_alpha_out_of_range(rng):
    with pytest.raises(ValueError):
        kf_update(random_state(rng), BoundingBox(0, 0, 1, 1), 1.5, MODEL)


def test_singular_innovation_raises():
    with pytest.raises(DegenerateCovarianceError):
        kf_update(state([5, 5, 10, 10, 0, 0, 0, 0]), BoundingBox(0, 0, 10, 10), 1.0, NOISELESS)


def test_covariance_stays_symmetric_psd(rng):
    st_ = kf_init(BoundingBox(100, 100, 40, 100), MODEL)
    for _ in range(10_000):
        st_ = kf_predict(st_, MODEL)
        if rng.uniform() < 0.8:
            c = st_.mean[:4] + rng.normal(0, 3, 4)
            c[2:] = np.maximum(c[2:], 5.0)
            st_ = kf_update(st_, center_to_tlwh(CenterBox(*c)), float(rng.choice([0.2, 0.6, 1.0])), MODEL)
        p = st_.covariance
        assert np.array_equal(p, p.T)
        assert np.linalg.eigvalsh(p).min() >= -1e-9


def test_alpha0_one_matches_plain_filter_bitwise(rng):
    boxes = []
    c = np.array([300.0, 200.0, 40.0, 100.0])
    for _ in range(80):
        c = c + np.r_[rng.normal(2, 4, 2), rng.normal(0, 3, 2)]
        c[2:] = np.maximum(c[2:], 5.0)
        boxes.append(center_to_tlwh(CenterBox(*c)))
    a = MotionTrack.start(boxes[0], 1, MODEL, AMSConfig(alpha0=1.0))
    b = MotionTrack.start(boxes[0], 1, MODEL, AMSConfig(enabled=False))
    for k, box in enumerate(boxes[1:], start=2):
        a.predict()
        b.predict()
        a.update(box, k)
        b.update(box, k)
        assert np.array_equal(a.state.mean, b.state.mean)


# -- accumulated error --------------------------------------------------------


def test_accumulated_error_example():
    np.testing.assert_array_equal(accumulated_error(np.array([1, 0, 0, 0, 0.5, 0, 0, 0]), 4),
                                  [3, 0, 0, 0, 0.5, 0, 0, 0])


def test_accumulated_error_example_by_rollout():
    e = state([1, 0, 0, 0, 0.5, 0, 0, 0])
    for _ in range(4):
        e = kf_predict(e, NOISELESS)
    np.testing.assert_array_equal(e.mean, [3, 0, 0, 0, 0.5, 0, 0, 0])


@given(st.lists(st.floats(-100, 100), min_size=8, max_size=8), st.integers(0, 100))
def test_accumulated_error_keeps_velocity(e, tau):
    e = np.array(e)
    out = accumulated_error(e, tau)
    np.testing.assert_array_equal(out[4:], e[4:])
    np.testing.assert_array_equal(accumulated_error(e, 0), e)


def test_accumulated_error_rejects_negative_tau():
    with pytest.raises(ValueError):
        accumulated_error(np.zeros(8), -1)


# -- speed buffer and filters ------------------------------------------------


def test_buffer_capacity_and_order():
    buf = SpeedBuffer(3)
    for k in range(1, 8):
        buf.push(k, BoundingBox(k, 0, 1, 1))
    assert buf.capacity == 4 and len(buf) == 4
    assert buf.frames == [4, 5, 6, 7]
    with pytest.raises(ValueError):
        buf.push(7, BoundingBox(0, 0, 1, 1))


@pytest.mark.parametrize("kind", list(FilterKind))
def test_filters_preserve_constant_velocity(kind):
    v = np.array([1.5, -0.5, 0.25, 0.75])
    start = np.array([100.0, 100.0, 30.0, 80.0])
    buf = buffer_of([start + k * v for k in range(31)])
    np.testing.assert_allclose(filter_speeds(buf, kind), v, rtol=1e-12)


def test_mean_filter_arithmetic():
    buf = buffer_of([(x, 0, 10, 10) for x in (0, 1, 2, 3)])
    assert filter_speeds(buf, FilterKind.MEAN)[0] == pytest.approx(1.0)


def test_mean_filter_uses_last_n_boxes():
    # N + 1 boxes are held but only the newest N (N - 1 differences) are averaged
    buf = SpeedBuffer(3)
    for k, x in enumerate((0.0, 10.0, 11.0, 12.0), start=1):
        buf.push(k, center_to_tlwh(CenterBox(x, 0, 10, 10)))
    assert filter_speeds(buf)[0] == pytest.approx(1.0)


@pytest.mark.parametrize("n", range(1, 61))
def test_filter_weights_unit_sum(n):
    assert gaussian_weights(n).sum() == pytest.approx(1.0, abs=1e-12)
    assert laplacian_weights(n).sum() == pytest.approx(1.0, abs=1e-12)


def test_laplacian_favours_recent_speeds():
    w = laplacian_weights(5)
    assert np.all(np.diff(w) > 0)


def test_filter_needs_two_boxes():
    with pytest.raises(InsufficientHistoryError):
        filter_speeds(buffer_of([(0, 0, 10, 10)]))
    with pytest.raises(InsufficientHistoryError):
        speed_difference(buffer_of([(0, 0, 10, 10)]), BoundingBox(0, 0, 10, 10))


def test_speed_difference_zero_for_steady_motion():
    buf = buffer_of([(10 + 2 * k, 20 + k, 10, 30) for k in range(10)])
    d = speed_difference(buf, center_to_tlwh(CenterBox(30, 30, 10, 30)))
    np.testing.assert_allclose(d, 0.0, atol=1e-12)


def test_speed_difference_width_halving():
    buf = buffer_of([(50, 50, 10, 10)] * 5)
    d = speed_difference(buf, center_to_tlwh(CenterBox(50, 50, 5, 10)))
    assert d[2] == pytest.approx(0.5)
    np.testing.assert_allclose(d[[0, 1, 3]], 0.0, atol=1e-12)


@given(st.floats(0.1, 20.0), st.integers(0, 10_000))
def test_speed_difference_scale_invariant(s, seed):
    rng = np.random.default_rng(seed)
    centers = np.cumsum(rng.normal(0, 2, (8, 4)), axis=0) + [200, 200, 40, 100]
    cur = centers[-1] + rng.normal(0, 5, 4)
    base = speed_difference(buffer_of(centers[:-1]), center_to_tlwh(CenterBox(*cur)))
    scaled = speed_difference(buffer_of(centers[:-1] * s), center_to_tlwh(CenterBox(*(cur * s))))
    np.testing.assert_allclose(scaled, base, rtol=1e-9, atol=1e-9)


# -- suppression coefficients --------------------------------------------------


def test_suppression_examples():
    assert suppression_coefficients(np.zeros(4), 0.2, 0.2).alpha == 1.0
    assert suppression_coefficients(np.array([0.5, 0, 0, 0.5]), 0.2, 0.2).alpha == pytest.approx(0.6)
    assert suppression_coefficients(np.ones(4), 0.2, 0.2).alpha == pytest.approx(0.2)


def test_suppression_threshold_is_inclusive():
    c = suppression_coefficients(np.array([0.2, 0.2000001, 0, 0]), 0.2, 0.5)
    assert (c.alpha_x, c.alpha_y) == (1.0, 0.5)


@given(st.lists(st.floats(0, 5), min_size=4, max_size=4), st.floats(0, 1), st.floats(0.0, 1.0))
def test_suppression_components_binary(d, theta, alpha0):
    c = suppression_coefficients(np.array(d), theta, alpha0)
    for v in (c.alpha_x, c.alpha_y, c.alpha_w, c.alpha_h):
        assert v in (alpha0, 1.0)
    assert alpha0 - 1e-12 <= c.alpha <= 1.0 + 1e-12


def test_motion_track_reports_alpha():
    t = MotionTrack.start(center_to_tlwh(CenterBox(100, 100, 30, 80)), 1)
    for k in range(2, 12):
        t.predict()
        assert t.update(center_to_tlwh(CenterBox(100 + 2 * (k - 1), 100, 30, 80)), k) == 1.0
    t.predict()
    # sudden halving of the width with the left edge fixed: x and w are abnormal
    alpha = t.update(BoundingBox(100 + 2 * 11 - 15, 60, 15, 80), 12)
    assert alpha == pytest.approx((0.2 + 1 + 0.2 + 1) / 4)
