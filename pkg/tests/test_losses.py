import numpy as np
import pytest
from pydantic import ValidationError

from tests.oracles import central_difference
from tracking.losses import (
    DetLosses,
    HeatTarget,
    IdTarget,
    LossState,
    RegTarget,
    ReidLosses,
    TrainingSchedule,
    focal_heat_loss,
    l1_reg_loss,
    reid_ce_loss,
    reid_ce_loss_from_embeddings,
    stationary_betas,
    total_loss,
)
from tracking.tensorlab import DimensionError


def _heat_target(rng, shape=(2, 5, 6), positives=((0, 1, 1), (1, 3, 4))):
    t = rng.uniform(0.0, 0.9, shape)
    for p in positives:
        t[p] = 1.0
    return HeatTarget(t)


class TestFocalLoss:
    def test_single_positive_half(self):
        loss, _ = focal_heat_loss(np.full((1, 1, 1), 0.5), HeatTarget(np.ones((1, 1, 1))))
        assert loss == pytest.approx(0.17329, abs=1e-5)

    def test_single_negative_half(self):
        loss, _ = focal_heat_loss(np.full((1, 1, 1), 0.5), HeatTarget(np.zeros((1, 1, 1))))
        assert loss == pytest.approx(0.17329, abs=1e-5)

    def test_perfect_prediction(self):
        target = _heat_target(np.random.default_rng(0))
        pred = (target.map == 1.0).astype(np.float64)
        loss, _ = focal_heat_loss(pred, target)
        assert 0.0 <= loss <= 1e-4

    def test_gradient_matches_finite_differences(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            shape = tuple(int(s) for s in rng.integers(1, 6, size=3))
            t = rng.uniform(0.0, 0.9, shape)
            t.reshape(-1)[rng.choice(t.size, size=int(rng.integers(0, t.size + 1)), replace=False)] = 1.0
            target = HeatTarget(t)
            pred = rng.uniform(0.05, 0.95, shape)
            _, grad = focal_heat_loss(pred, target)
            cells = rng.choice(pred.size, size=min(pred.size, 8), replace=False)
            fd = central_difference(lambda p, target=target: focal_heat_loss(p, target)[0], pred, cells, step=1e-5)
            np.testing.assert_allclose(grad.reshape(-1)[cells], fd, rtol=1e-4, atol=1e-8, err_msg=f"seed {seed}")

    def test_clamped_cells_have_zero_gradient(self):
        target = HeatTarget(np.zeros((1, 1, 2)))
        _, grad = focal_heat_loss(np.array([[[0.0, 1.0]]]), target)
        np.testing.assert_array_equal(grad, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            focal_heat_loss(np.zeros((1, 2, 2)), HeatTarget(np.zeros((1, 2, 3))))

    def test_target_range_checked(self):
        with pytest.raises(ValueError):
            HeatTarget(np.full((1, 2, 2), 1.5))


class TestL1Loss:
    def _target(self):
        return RegTarget([(0, 1), (2, 2)], np.array([[0.5, 0.25], [0.1, 0.9]]), np.array([[2.0, 3.0], [4.0, 1.0]]))

    def test_exact_prediction_is_zero(self):
        t = self._target()
        off, wh = t.to_dense(3, 3)
        assert l1_reg_loss(off, wh, t).total == pytest.approx(0.0, abs=1e-6)

    def test_off_by_one(self):
        t = self._target()
        off, wh = t.to_dense(3, 3)
        res = l1_reg_loss(off + 1.0, wh - 1.0, t)
        assert res.off == pytest.approx(1.0, abs=1e-6)
        assert res.wh == pytest.approx(1.0, abs=1e-6)

    def test_matches_masked_sum_and_gradient(self):
        rng = np.random.default_rng(2)
        t = self._target()
        pred_off, pred_wh = rng.standard_normal((2, 2, 3, 3))
        res = l1_reg_loss(pred_off, pred_wh, t)
        want = sum(abs(pred_off[c, y, x] - t.offsets[i, c]) for i, (y, x) in enumerate(t.centers) for c in range(2)) / 4
        assert res.off == pytest.approx(want, rel=1e-9)
        y, x = t.centers[0]
        assert res.grad_off[0, y, x] == pytest.approx(np.sign(pred_off[0, y, x] - 0.5) / 4)
        assert res.grad_off[:, 1, 1].tolist() == [0.0, 0.0]

    def test_gradient_matches_finite_differences(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            h, w = (int(s) for s in rng.integers(1, 5, size=2))
            n = int(rng.integers(1, h * w + 1))
            centers = [divmod(int(c), w) for c in rng.choice(h * w, size=n, replace=False)]
            t = RegTarget(centers, rng.random((n, 2)), rng.uniform(1.0, 8.0, (n, 2)))
            off, wh = t.to_dense(h, w)
            # keep every residual well away from the kink at zero
            pred_off = off + rng.choice([-1.0, 1.0], off.shape) * rng.uniform(0.01, 1.0, off.shape)
            res = l1_reg_loss(pred_off, wh, t)
            fd = central_difference(lambda p, t=t, wh=wh: l1_reg_loss(p, wh, t).off, pred_off, range(pred_off.size), step=1e-5)
            np.testing.assert_allclose(res.grad_off.reshape(-1), fd, atol=1e-8, err_msg=f"seed {seed}")

    def test_center_out_of_bounds(self):
        t = RegTarget([(5, 0)], np.zeros((1, 2)), np.ones((1, 2)))
        with pytest.raises(ValueError):
            l1_reg_loss(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), t)

    def test_empty_target(self):
        res = l1_reg_loss(np.ones((2, 2, 2)), np.ones((2, 2, 2)), RegTarget([], np.zeros((0, 2)), np.zeros((0, 2))))
        assert res.total == 0.0


class TestReidLoss:
    def test_uniform_logits(self):
        t = IdTarget([(0, 0), (1, 1)], [0, 2], np.zeros((3, 4)), np.zeros(3))
        loss, _ = reid_ce_loss(np.random.default_rng(3).standard_normal((4, 2, 2)), t)
        assert loss == pytest.approx(np.log(3))

    def test_two_class_hand_value(self):
        t = IdTarget([(0, 0)], [0], np.eye(2), np.zeros(2))
        id_map = np.zeros((2, 1, 1))
        id_map[0, 0, 0] = 1.0
        loss, _ = reid_ce_loss(id_map, t)
        assert loss == pytest.approx(0.31326, abs=1e-5)

    def test_gradient_matches_finite_differences(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            n, d, classes = rng.integers(1, 6), rng.integers(1, 7), rng.integers(2, 6)
            centers = [(i, 0) for i in range(n)]
            t = IdTarget(centers, rng.integers(0, classes, n).tolist(), rng.standard_normal((classes, d)), rng.standard_normal(classes))
            emb = rng.standard_normal((n, d))
            _, grad = reid_ce_loss_from_embeddings(emb, t)
            fd = central_difference(lambda e, t=t: reid_ce_loss_from_embeddings(e, t)[0], emb, range(emb.size), step=1e-5)
            np.testing.assert_allclose(grad.reshape(-1), fd, rtol=1e-4, atol=1e-8, err_msg=f"seed {seed}")

    def test_needs_two_classes(self):
        t = IdTarget([(0, 0)], [0], np.ones((1, 2)), np.zeros(1))
        with pytest.raises(ValueError):
            reid_ce_loss(np.zeros((2, 1, 1)), t)

    def test_no_centers(self):
        loss, grad = reid_ce_loss(np.zeros((2, 2, 2)), IdTarget([], [], np.eye(2), np.zeros(2)))
        assert loss == 0.0
        assert grad.shape == (0, 2)

    def test_label_range_checked(self):
        with pytest.raises(ValueError):
            IdTarget([(0, 0)], [2], np.eye(2), np.zeros(2))


class TestTotalLoss:
    det = DetLosses(heat_prev=0.5, heat_curr=0.7, off=0.3, wh=0.5)
    reid = ReidLosses(reid_prev=1.2, reid_curr=0.8)

    def test_zero_betas(self):
        loss, _, _ = total_loss(self.det, self.reid, LossState())
        assert loss == pytest.approx(0.5 * (2.0 + 2.0))

    def test_stationary_when_beta_is_log_half_sum(self):
        _, d1, d2 = total_loss(self.det, self.reid, LossState(beta1=0.0, beta2=0.0))
        assert d1 == pytest.approx(0.0, abs=1e-12)
        assert d2 == pytest.approx(0.0, abs=1e-12)

    def test_stationary_betas(self):
        det = DetLosses(heat_prev=1.0, heat_curr=2.0, off=0.5, wh=0.5)
        state = stationary_betas(det, self.reid)
        _, d1, d2 = total_loss(det, self.reid, state)
        assert state.beta1 == pytest.approx(np.log(2.0))
        assert (d1, d2) == pytest.approx((0.0, 0.0), abs=1e-12)

    def test_gradients_match_finite_differences(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            h1, h2, off, wh, r1, r2 = rng.uniform(0.0, 3.0, 6)
            det, reid = DetLosses(heat_prev=h1, heat_curr=h2, off=off, wh=wh), ReidLosses(reid_prev=r1, reid_curr=r2)
            b = rng.uniform(-2.0, 2.0, 2)

            def f(x, det=det, reid=reid):
                return total_loss(det, reid, LossState(beta1=x[0], beta2=x[1]))[0]

            _, d1, d2 = total_loss(det, reid, LossState(beta1=b[0], beta2=b[1]))
            fd = central_difference(f, b, [0, 1], step=1e-5)
            np.testing.assert_allclose([d1, d2], fd, rtol=1e-6, atol=1e-7, err_msg=f"seed {seed}")

    def test_negative_component_rejected(self):
        with pytest.raises(ValidationError):
            DetLosses(heat_prev=-1.0, heat_curr=0.0, off=0.0, wh=0.0)

    def test_non_finite_beta_rejected(self):
        with pytest.raises(ValidationError):
            LossState(beta1=float("nan"))


class TestTrainingSchedule:
    def test_step_decay(self):
        sched = TrainingSchedule()
        assert sched.learning_rate(0) == sched.learning_rate(19) == 7e-5
        assert sched.learning_rate(20) == sched.learning_rate(29) == 7e-6

    def test_epoch_range(self):
        with pytest.raises(ValueError):
            TrainingSchedule().learning_rate(30)

    def test_feature_map_size(self):
        assert TrainingSchedule().feature_map_size() == (152, 272)
