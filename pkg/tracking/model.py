"""Prediction heads, the two-frame forward pass and CenterNet-style decoding.

Each head is a 3×3 conv, a ReLU and a 1×1 conv on the shared feature map. The
forward pass runs the heads on both frames, boosts the current ReID map with
TEBM and refines the current heatmap with TDRM.
"""

from dataclasses import dataclass

import numpy as np

from schemas import MapLayout
from tracking.records import Detection
from tracking.tdrm import TdrmParams, peak_mask, tdrm_forward, topk_flat
from tracking.tebm import BoostInputs, TebmParams, tebm_forward
from tracking.tensorlab import (
    ConvParams,
    DimensionError,
    FeatureMap,
    as_feature_map,
    conv2d,
    conv_from_tensors,
    conv_to_tensors,
    relu,
    sigmoid,
)

HEAD_CONV = 32
HEATMAP_PRIOR_BIAS = -2.19
HEADS = ("hm", "id", "off", "wh")


@dataclass(frozen=True)
class HeadParams:
    conv1: ConvParams
    conv2: ConvParams

    def __post_init__(self) -> None:
        if self.conv1.kernel_size != (3, 3) or self.conv2.kernel_size != (1, 1):
            raise DimensionError("a head is a 3×3 conv followed by a 1×1 conv")
        if self.conv2.in_channels != self.conv1.out_channels:
            raise DimensionError("head convs do not chain")

    @classmethod
    def random(
        cls, in_ch: int, out_ch: int, rng: np.random.Generator, head_conv: int = HEAD_CONV, bias: float | None = None
    ) -> "HeadParams":
        conv2 = ConvParams.random(out_ch, head_conv, 1, rng)
        if bias is not None:
            conv2 = ConvParams(conv2.weights, np.full(out_ch, bias))
        return cls(ConvParams.random(head_conv, in_ch, 3, rng), conv2)


def head_forward(fm: FeatureMap, params: HeadParams) -> FeatureMap:
    return conv2d(relu(conv2d(fm, params.conv1)), params.conv2)


@dataclass(frozen=True)
class StcmotParams:
    """All inference parameters on top of the backbone features."""

    hm: HeadParams
    id: HeadParams
    off: HeadParams
    wh: HeadParams
    tebm: TebmParams
    tdrm: TdrmParams

    def __post_init__(self) -> None:
        fm_ch = self.hm.conv1.in_channels
        if any(getattr(self, h).conv1.in_channels != fm_ch for h in HEADS):
            raise DimensionError("all heads must read the same feature map")
        if self.tdrm.fm_channels != fm_ch:
            raise DimensionError(f"TDRM expects {self.tdrm.fm_channels} feature channels, heads read {fm_ch}")
        if self.tebm.channels != self.id.conv2.out_channels:
            raise DimensionError("TEBM width must equal the ReID head output")
        if self.tdrm.num_classes != self.hm.conv2.out_channels:
            raise DimensionError("TDRM must output one channel per heatmap class")
        if self.off.conv2.out_channels != 2 or self.wh.conv2.out_channels != 2:
            raise DimensionError("offset and size heads have two channels")

    @property
    def k(self) -> int:
        return self.tdrm.k

    @classmethod
    def random(cls, layout: MapLayout, rng: np.random.Generator, head_conv: int = HEAD_CONV) -> "StcmotParams":
        fm = layout.fm_channels
        return cls(
            hm=HeadParams.random(fm, layout.num_classes, rng, head_conv, bias=HEATMAP_PRIOR_BIAS),
            id=HeadParams.random(fm, layout.embed_dim, rng, head_conv),
            off=HeadParams.random(fm, 2, rng, head_conv),
            wh=HeadParams.random(fm, 2, rng, head_conv),
            tebm=TebmParams.random(layout.embed_dim, rng),
            tdrm=TdrmParams.random(layout.k, layout.num_classes, rng, fm_channels=fm),
        )

    def to_tensors(self) -> dict[str, np.ndarray]:
        blob = {}
        for h in HEADS:
            head = getattr(self, h)
            blob |= conv_to_tensors(f"head.{h}.conv1", head.conv1) | conv_to_tensors(f"head.{h}.conv2", head.conv2)
        return blob | self.tebm.to_tensors() | self.tdrm.to_tensors()

    @classmethod
    def from_tensors(cls, blob: dict[str, np.ndarray]) -> "StcmotParams":
        heads = {
            h: HeadParams(conv_from_tensors(f"head.{h}.conv1", blob), conv_from_tensors(f"head.{h}.conv2", blob))
            for h in HEADS
        }
        return cls(**heads, tebm=TebmParams.from_tensors(blob), tdrm=TdrmParams.from_tensors(blob))


@dataclass(frozen=True)
class ModelOutputs:
    hm_prev: FeatureMap
    id_prev: FeatureMap
    id_curr: FeatureMap
    id_boosted: FeatureMap
    hm_refined: FeatureMap
    offset: FeatureMap
    size: FeatureMap

    def as_tensors(self) -> dict[str, np.ndarray]:
        return {f"out.{k}": v for k, v in self.__dict__.items()}


def stcmot_forward(fm_prev: FeatureMap, fm_curr: FeatureMap, params: StcmotParams) -> ModelOutputs:
    """Two-frame inference from backbone features to the refined heatmap.

    Args:
        fm_prev: Features of frame t-1.
        fm_curr: Features of frame t, same shape.
        params: Heads and module parameters.

    Raises:
        DimensionError: If the feature maps differ or do not match the heads.
    """
    fm_prev, fm_curr = as_feature_map(fm_prev), as_feature_map(fm_curr)
    if fm_prev.shape != fm_curr.shape:
        raise DimensionError(f"frame features differ: {fm_prev.shape} vs {fm_curr.shape}")
    hm_prev = sigmoid(head_forward(fm_prev, params.hm))
    id_prev = head_forward(fm_prev, params.id)
    id_curr = head_forward(fm_curr, params.id)
    id_boosted = tebm_forward(BoostInputs(id_prev, id_curr), params.tebm)
    return ModelOutputs(
        hm_prev=hm_prev,
        id_prev=id_prev,
        id_curr=id_curr,
        id_boosted=id_boosted,
        hm_refined=tdrm_forward(hm_prev, id_prev, id_boosted, fm_curr, params.k, params.tdrm),
        offset=head_forward(fm_curr, params.off),
        size=head_forward(fm_curr, params.wh),
    )


def decode_detections(
    hm: FeatureMap,
    off: FeatureMap,
    wh: FeatureMap,
    idmap: FeatureMap,
    k: int,
    stride: int,
    score_min: float = 0.1,
) -> list[Detection]:
    """Turn head outputs into pixel-space detections.

    Peaks surviving 3×3 max-pool suppression are ranked over all classes (ties
    by ascending flat index); the box center is ``(x + off_x, y + off_y)·stride``
    and the size ``wh·stride``. Peaks below ``score_min`` or with a
    non-positive size are dropped.

    Returns:
        Detections ordered by non-increasing score, class ids starting at 1.
    """
    hm = as_feature_map(hm)
    off, wh, idmap = (np.asarray(a, dtype=np.float64) for a in (off, wh, idmap))
    c, h, w = hm.shape
    if off.shape != (2, h, w) or wh.shape != (2, h, w) or idmap.shape[1:] != (h, w):
        raise DimensionError("offset, size and ReID maps must match the heatmap spatially")
    masked = peak_mask(hm)
    dets = []
    for idx in topk_flat(masked, min(k, masked.size)):
        score = float(masked.reshape(-1)[idx])
        if score < score_min:
            break
        cls, y, x = idx // (h * w), idx % (h * w) // w, idx % w
        bw, bh = wh[:, y, x] * stride
        if bw <= 0 or bh <= 0:
            continue
        cx, cy = (x + off[0, y, x]) * stride, (y + off[1, y, x]) * stride
        dets.append(Detection(np.array([cx - bw / 2, cy - bh / 2, bw, bh]), score, int(cls) + 1, idmap[:, y, x]))
    return dets
