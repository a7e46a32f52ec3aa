"""Qualitative component checks on synthetic data.

The heatmap-prior check stores the trajectory picks of the last frame before a
detector dropout and asks whether the refined heatmap scores the missing
target higher with the correlation evidence than without it.
"""

from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from logger_config import tracking_logger
from schemas import MapLayout, SceneConfig
from tracking.records import GroundTruth
from tracking.synth import generate_scene, gt_ids, make_prototypes, render_maps
from tracking.tdrm import TdrmParams, correlation, max_csam, pick_topk, refine_heatmap
from tracking.tebm import BoostInputs, TebmParams, tebm_forward
from tracking.tensorlab import FeatureMap

DROPOUT_LENGTH = 3


@dataclass(frozen=True)
class PriorGain:
    frame: int
    target_id: int
    with_prior: float
    without_prior: float

    @property
    def gain(self) -> float:
        return self.with_prior - self.without_prior


def heatmap_prior_gain(
    gt: GroundTruth,
    dropouts: Mapping[int, int],
    layout: MapLayout,
    prototypes: Mapping[int, np.ndarray],
    params: TdrmParams | None = None,
    tebm: TebmParams | None = None,
    length: int = DROPOUT_LENGTH,
) -> list[PriorGain]:
    """Refined heatmap score at each dropped target's cell, with and without the prior.

    Args:
        gt: Ground truth of the sequence.
        dropouts: Target id -> first frame of its dropout; the frame before must exist.
        layout: Map geometry.
        prototypes: Identity embeddings, nonnegative for a guaranteed positive correlation.
        params: TDRM parameters, ``TdrmParams.evidence_prior`` by default.
        tebm: TEBM parameters, the identity module by default.
        length: Frames per dropout.

    Returns:
        One entry per (frame, target) that is present in the ground truth.

    Raises:
        ValueError: If a dropout starts at the first frame.
    """
    params = params or TdrmParams.evidence_prior(layout.k, layout.num_classes, layout.fm_channels)
    tebm = tebm or TebmParams.identity(layout.embed_dim)
    out = []
    for tid, start in sorted(dropouts.items()):
        anchor = start - 1
        if anchor not in gt:
            raise ValueError(f"dropout of id {tid} at frame {start} has no preceding frame")
        stored = render_maps(gt[anchor], layout, prototypes)
        picks = pick_topk(stored.hm, stored.idmap, params.k)
        for frame in range(start, start + length):
            box = next((b for b in gt.get(frame, []) if b.id == tid), None)
            if box is None:
                continue
            curr = render_maps(gt[frame], layout, prototypes)
            boosted = tebm_forward(BoostInputs(stored.idmap, curr.idmap), tebm)
            m_hat = max_csam(correlation(picks, boosted), params)
            with_prior = refine_heatmap(curr.fm, m_hat, params)
            without = refine_heatmap(curr.fm, np.zeros_like(m_hat), params)
            y, x = curr.reg.centers[[b.id for b in gt[frame]].index(tid)]
            ch = box.class_id - 1
            out.append(PriorGain(frame, tid, float(with_prior[ch, y, x]), float(without[ch, y, x])))
    return out


def dropout_ablation(scene: SceneConfig, layout: MapLayout, num_dropouts: int = 3, seed: int = 0) -> list[PriorGain]:
    """Generate a scene, drop a few targets mid-sequence and measure the prior gain."""
    gt = generate_scene(scene)
    ids = gt_ids(gt)
    if scene.num_frames < 2 + DROPOUT_LENGTH or not ids:
        raise ValueError("scene too short or empty for a dropout")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(ids, size=min(num_dropouts, len(ids)), replace=False)
    starts = rng.integers(2, scene.num_frames - DROPOUT_LENGTH + 2, size=len(chosen))
    protos = make_prototypes(ids, layout.embed_dim, seed, nonnegative=True)
    gains = heatmap_prior_gain(gt, dict(zip(chosen.tolist(), starts.tolist())), layout, protos)
    tracking_logger.info(
        "dropout ablation: %d cells, min gain %.4g", len(gains), min((g.gain for g in gains), default=0.0)
    )
    return gains


def monotone_evidence_check(
    fm: FeatureMap,
    m_hat: FeatureMap,
    params: TdrmParams,
    rng: np.random.Generator,
    trials: int = 100,
    scale: float = 0.1,
) -> float:
    """Smallest change of the refined heatmap when nonnegative evidence is added.

    With nonnegative ψ weights the result is never below zero.
    """
    base = refine_heatmap(fm, m_hat, params).astype(np.float64)
    worst = np.inf
    for _ in range(trials):
        bumped = m_hat + scale * rng.random(m_hat.shape).astype(np.float32)
        worst = min(worst, float((refine_heatmap(fm, bumped, params) - base).min()))
    return worst


def tebm_attention_sensitivity(id_prev: FeatureMap, id_curr: FeatureMap, params: TebmParams) -> float:
    """Max absolute difference of the boosted map under raw versus area-normalized attention."""
    inputs = BoostInputs(id_prev, id_curr)
    raw = tebm_forward(inputs, params.with_attention_scale("raw"))
    area = tebm_forward(inputs, params.with_attention_scale("area"))
    return float(np.abs(raw.astype(np.float64) - area).max())
