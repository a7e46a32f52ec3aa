import numpy as np
import pytest

from tracking.kalman import (
    CHI2_GATE_95,
    KalmanState,
    gating_distances,
    kf_initiate,
    kf_predict,
    kf_project,
    kf_update,
    squared_mahalanobis,
    tlwh_to_xyah,
    xyah_to_tlwh,
)
from tracking.tensorlab import NumericError


class TestConversions:
    def test_xyah(self):
        np.testing.assert_allclose(tlwh_to_xyah([10.0, 20.0, 4.0, 8.0]), [12.0, 24.0, 0.5, 8.0])

    def test_inverse(self):
        box = np.array([3.5, -1.0, 6.0, 9.0])
        np.testing.assert_allclose(xyah_to_tlwh(tlwh_to_xyah(box)), box)

    def test_rejects_empty_box(self):
        with pytest.raises(ValueError):
            tlwh_to_xyah([0.0, 0.0, 0.0, 5.0])


class TestFilter:
    def test_initiate_has_zero_velocity(self):
        state = kf_initiate([0.0, 0.0, 10.0, 10.0])
        np.testing.assert_array_equal(state.mean[4:], 0.0)
        assert np.all(np.linalg.eigvalsh(state.cov) > 0)

    def test_predict_grows_position_variance(self):
        state = kf_initiate([5.0, 5.0, 10.0, 20.0])
        nxt = kf_predict(state)
        assert np.all(np.diag(nxt.cov)[[0, 1, 3]] > np.diag(state.cov)[[0, 1, 3]])

    def test_stationary_fixed_point(self):
        box = np.array([20.0, 30.0, 8.0, 16.0])
        state = kf_initiate(box)
        for _ in range(10):
            state = kf_update(kf_predict(state), box)
        np.testing.assert_allclose(state.tlwh, box, atol=1e-6)

    def test_constant_velocity_recovered(self):
        v = np.array([1.5, -0.5])
        box = np.array([100.0, 100.0, 10.0, 20.0])
        state = kf_initiate(box)
        for step in range(1, 51):
            state = kf_update(kf_predict(state), box + np.r_[v * step, 0.0, 0.0])
        np.testing.assert_allclose(state.mean[4:6], v, atol=1e-3)

    def test_update_pulls_toward_measurement(self):
        state = kf_predict(kf_initiate([0.0, 0.0, 10.0, 10.0]))
        updated = kf_update(state, [4.0, 0.0, 10.0, 10.0])
        assert 0.0 < updated.tlwh[0] < 4.0
        assert np.allclose(updated.cov, updated.cov.T)


class TestGating:
    def test_zero_at_projected_mean(self):
        state = kf_predict(kf_initiate([10.0, 10.0, 8.0, 16.0]))
        mean, _ = kf_project(state)
        assert squared_mahalanobis(state, xyah_to_tlwh(mean)) == pytest.approx(0.0, abs=1e-12)

    def test_chi_square_gate(self):
        assert CHI2_GATE_95 == pytest.approx(9.4877, abs=1e-4)

    def test_quadratic_in_offset(self):
        state = kf_predict(kf_initiate([10.0, 10.0, 8.0, 16.0]))
        base = state.tlwh
        d1 = squared_mahalanobis(state, base + [1.0, 0.5, 0.0, 0.0])
        d2 = squared_mahalanobis(state, base + [2.0, 1.0, 0.0, 0.0])
        assert d2 == pytest.approx(4 * d1, rel=1e-9)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        state = kf_predict(kf_initiate([10.0, 10.0, 8.0, 16.0]))
        boxes = np.c_[rng.uniform(5, 15, (6, 2)), rng.uniform(6, 18, (6, 2))]
        want = [squared_mahalanobis(state, b) for b in boxes]
        np.testing.assert_allclose(gating_distances(state, boxes), want, rtol=1e-10)

    def test_empty_batch(self):
        assert gating_distances(kf_initiate([0.0, 0.0, 1.0, 1.0]), np.zeros((0, 4))).shape == (0,)

    def test_singular_covariance(self):
        state = KalmanState(np.zeros(8), np.zeros((8, 8)))
        with pytest.raises(NumericError):
            squared_mahalanobis(state, [0.0, 0.0, 1.0, 1.0])
