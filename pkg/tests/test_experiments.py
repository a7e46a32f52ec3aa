import numpy as np
import pytest

from schemas import MapLayout, SceneConfig
from tracking.experiments import (
    dropout_ablation,
    heatmap_prior_gain,
    monotone_evidence_check,
)
from tracking.synth import generate_scene, gt_ids, make_prototypes
from tracking.tdrm import TdrmParams

LAYOUT = MapLayout(num_classes=2, height=8, width=12, stride=4, embed_dim=8, fm_channels=6, k=5)
SCENE = SceneConfig(num_targets=4, num_frames=12, image_w=48, image_h=32, box_size_range=(6.0, 10.0), seed=2)


class TestHeatmapPrior:
    def test_prior_raises_dropped_targets(self):
        gt = generate_scene(SCENE)
        protos = make_prototypes(gt_ids(gt), LAYOUT.embed_dim, seed=3, nonnegative=True)
        gains = heatmap_prior_gain(gt, {1: 4, 3: 8}, LAYOUT, protos)
        assert [(g.frame, g.target_id) for g in gains] == [(4, 1), (5, 1), (6, 1), (8, 3), (9, 3), (10, 3)]
        assert all(g.gain > 0.0 for g in gains)

    def test_needs_preceding_frame(self):
        gt = generate_scene(SCENE)
        protos = make_prototypes(gt_ids(gt), LAYOUT.embed_dim, nonnegative=True)
        with pytest.raises(ValueError):
            heatmap_prior_gain(gt, {1: 1}, LAYOUT, protos)

    def test_dropout_ablation(self):
        gains = dropout_ablation(SCENE, LAYOUT, num_dropouts=2, seed=1)
        assert len(gains) == 6
        assert min(g.gain for g in gains) > 0.0

    def test_short_scene_rejected(self):
        with pytest.raises(ValueError):
            dropout_ablation(SCENE.model_copy(update={"num_frames": 4}), LAYOUT)


class TestMonotoneEvidence:
    def test_adding_evidence_never_lowers_heatmap(self):
        rng = np.random.default_rng(0)
        params = TdrmParams.evidence_prior(LAYOUT.k, LAYOUT.num_classes, LAYOUT.fm_channels)
        fm = rng.standard_normal((LAYOUT.fm_channels, 8, 12)).astype(np.float32)
        m_hat = rng.random((params.reduced_channels, 8, 12)).astype(np.float32)
        assert monotone_evidence_check(fm, m_hat, params, rng, trials=10) >= 0.0
