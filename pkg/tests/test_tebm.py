import numpy as np
import pytest

from cli.mot_io import load_tensors, save_tensors
from tests.oracles import scipy_conv2d
from tracking.experiments import tebm_attention_sensitivity
from tracking.tebm import (
    BoostInputs,
    TebmParams,
    boost,
    channel_descriptor,
    query_pool,
    salient_attention,
    tebm_forward,
)
from tracking.tensorlab import DimensionError, relu


def _oracle(id_prev, id_curr, p: TebmParams):
    c, h, w = id_curr.shape
    x_prev, x_curr = id_prev.astype(np.float64), id_curr.astype(np.float64)
    q = x_prev.reshape(c, -1).mean(axis=1)
    cols = x_curr.reshape(c, -1)
    w_c = (q @ cols) / (np.linalg.norm(q) * np.linalg.norm(cols, axis=0))
    v = cols @ w_c
    cross = p.cross_linear.weights[:, :, 0, 0].astype(np.float64) @ v + p.cross_linear.bias
    w_s = (cross - cross.mean()) / np.sqrt(cross.var() + 1e-5) * p.ln_gain + p.ln_shift
    x = x_curr * w_s[:, None, None] + x_curr
    bn = p.psi.bn
    y = scipy_conv2d(x, p.psi.conv1.weights, p.psi.conv1.bias)
    y = (y - bn.mean[:, None, None]) / np.sqrt(bn.var[:, None, None] + bn.eps) * bn.scale[:, None, None] + bn.shift[:, None, None]
    return scipy_conv2d(np.maximum(y, 0.0), p.psi.conv2.weights, p.psi.conv2.bias)


class TestSalientAttention:
    def test_columns_equal_to_query(self):
        q = np.array([1.0, 2.0, -1.0])
        curr = np.repeat(q[:, None, None], 6, axis=2).repeat(2, axis=1)
        np.testing.assert_allclose(salient_attention(q, curr), 1.0, atol=1e-6)

    def test_zero_query(self):
        curr = np.random.default_rng(0).standard_normal((3, 2, 2))
        assert not salient_attention(np.zeros(3), curr).any()

    def test_query_is_global_mean(self):
        prev = np.random.default_rng(1).standard_normal((4, 3, 5))
        np.testing.assert_allclose(query_pool(prev), prev.mean(axis=(1, 2)), atol=1e-6)


class TestChannelDescriptor:
    def test_zero_cross_relation(self):
        p = TebmParams.identity(4)
        curr = np.random.default_rng(0).standard_normal((4, 3, 3))
        w_c = salient_attention(query_pool(curr), curr)
        np.testing.assert_allclose(channel_descriptor(curr, w_c, p), 0.0, atol=1e-6)

    def test_zero_attention_gives_shift(self):
        rng = np.random.default_rng(2)
        p = TebmParams.random(5, rng)
        out = channel_descriptor(rng.standard_normal((5, 3, 4)), np.zeros((1, 3, 4)), p)
        # cross = bias only, so the layer norm still sees the bias vector
        cross = p.cross_linear.bias.astype(np.float64)
        want = (cross - cross.mean()) / np.sqrt(cross.var() + 1e-5) * p.ln_gain + p.ln_shift
        np.testing.assert_allclose(out, want, rtol=1e-5, atol=1e-5)

    def test_attention_shape_checked(self):
        p = TebmParams.identity(3)
        with pytest.raises(DimensionError):
            channel_descriptor(np.ones((3, 2, 2)), np.ones((1, 2, 3)), p)


class TestBoost:
    def test_zero_descriptor_identity_psi(self):
        curr = np.abs(np.random.default_rng(3).standard_normal((4, 3, 3)))
        out = boost(curr, np.zeros(4), TebmParams.identity(4))
        np.testing.assert_allclose(out, curr, rtol=1e-4, atol=1e-6)

    def test_minus_one_cancels(self):
        curr = np.random.default_rng(4).standard_normal((4, 3, 3))
        np.testing.assert_allclose(boost(curr, -np.ones(4), TebmParams.identity(4)), 0.0, atol=1e-6)

    def test_descriptor_length_checked(self):
        with pytest.raises(DimensionError):
            boost(np.ones((4, 2, 2)), np.ones(3), TebmParams.identity(4))


class TestTebmForward:
    def test_identity_module_is_relu_of_current(self):
        rng = np.random.default_rng(5)
        prev, curr = rng.standard_normal((2, 8, 4, 6))
        out = tebm_forward(BoostInputs(prev, curr), TebmParams.identity(8))
        np.testing.assert_allclose(out, relu(curr), rtol=1e-4, atol=1e-6)

    def test_shape_preserved_at_full_width(self):
        rng = np.random.default_rng(6)
        prev, curr = rng.standard_normal((2, 128, 16, 24)).astype(np.float32)
        assert tebm_forward(BoostInputs(prev, curr), TebmParams.identity(128, psi_kernel=1)).shape == (128, 16, 24)

    def test_matches_composed_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            p = TebmParams.random(16, rng)
            prev, curr = rng.standard_normal((2, 16, 16, 24)).astype(np.float32)
            got = tebm_forward(BoostInputs(prev, curr), p)
            np.testing.assert_allclose(got, _oracle(prev, curr, p), rtol=1e-5, atol=1e-5, err_msg=f"seed {seed}")

    def test_frames_must_match(self):
        with pytest.raises(DimensionError):
            BoostInputs(np.ones((4, 2, 2)), np.ones((4, 2, 3)))

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        p = TebmParams.random(4, rng)
        inputs = BoostInputs(*rng.standard_normal((2, 4, 3, 3)))
        np.testing.assert_array_equal(tebm_forward(inputs, p), tebm_forward(inputs, p))


class TestAttentionScale:
    def test_identity_params_insensitive(self):
        rng = np.random.default_rng(9)
        prev, curr = rng.standard_normal((2, 4, 3, 3))
        assert tebm_attention_sensitivity(prev, curr, TebmParams.identity(4)) == 0.0

    def test_random_params_sensitive(self):
        rng = np.random.default_rng(10)
        p = TebmParams.random(4, rng)
        prev, curr = rng.standard_normal((2, 4, 5, 5))
        assert tebm_attention_sensitivity(prev, curr, p) > 0.0


class TestTensors:
    def test_area_scale_survives_npz(self, tmp_path):
        rng = np.random.default_rng(11)
        p = TebmParams.random(4, rng).with_attention_scale("area")
        save_tensors(tmp_path / "tebm.npz", p.to_tensors())
        q = TebmParams.from_tensors(load_tensors(tmp_path / "tebm.npz"))
        assert q.attention_scale == "area"
        prev, curr = rng.standard_normal((2, 4, 3, 5)).astype(np.float32)
        np.testing.assert_array_equal(tebm_forward(BoostInputs(prev, curr), q), tebm_forward(BoostInputs(prev, curr), p))

    def test_missing_scale_loads_raw(self):
        blob = TebmParams.random(3, np.random.default_rng(12)).with_attention_scale("area").to_tensors()
        del blob["tebm.attention_scale"]
        assert TebmParams.from_tensors(blob).attention_scale == "raw"

    def test_unknown_scale_code_rejected(self):
        blob = TebmParams.identity(3).to_tensors() | {"tebm.attention_scale": np.array(7, dtype=np.int8)}
        with pytest.raises(ValueError, match="attention_scale"):
            TebmParams.from_tensors(blob)
