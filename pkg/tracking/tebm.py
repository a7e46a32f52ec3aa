"""Temporal Embedding Boosting Module.

Reweights the channels of the current ReID map with a descriptor built from
the previous frame's pooled embedding: a global query is compared against every
current position, the similarity map weights a channel descriptor, and the
descriptor rescales the map before a Conv-BN-ReLU-Conv block.
"""

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from tracking.tensorlab import (
    ConvParams,
    DimensionError,
    FeatureMap,
    PsiBlock,
    Vector,
    as_feature_map,
    conv_from_tensors,
    conv_to_tensors,
    cosine_similarity_map,
    global_avg_pool,
    layer_norm,
    psi_forward,
    psi_from_tensors,
    psi_to_tensors,
)

ATTENTION_SCALES: tuple[Literal["raw", "area"], ...] = ("raw", "area")


@dataclass(frozen=True)
class TebmParams:
    """Parameters of the boosting module for a ``channels``-wide ReID map.

    ``attention_scale`` selects how the similarity map enters the descriptor
    product: ``"raw"`` uses the cosine values as they are, ``"area"`` divides
    them by H·W first.
    """

    cross_linear: ConvParams
    ln_gain: np.ndarray
    ln_shift: np.ndarray
    psi: PsiBlock
    attention_scale: Literal["raw", "area"] = "raw"

    def __post_init__(self) -> None:
        c = self.channels
        gain = np.asarray(self.ln_gain, dtype=np.float32).reshape(-1)
        shift = np.asarray(self.ln_shift, dtype=np.float32).reshape(-1)
        if self.cross_linear.kernel_size != (1, 1) or self.cross_linear.in_channels != c:
            raise DimensionError("cross_linear must be a square 1×1 map")
        if gain.size != c or shift.size != c:
            raise DimensionError("layer norm gain/shift must match the channel count")
        if self.psi.conv1.in_channels != c or self.psi.conv2.out_channels != c:
            raise DimensionError("psi must map the channel count onto itself")
        object.__setattr__(self, "ln_gain", gain)
        object.__setattr__(self, "ln_shift", shift)

    @property
    def channels(self) -> int:
        return self.cross_linear.out_channels

    @classmethod
    def identity(cls, channels: int = 128, psi_kernel: int = 3) -> "TebmParams":
        """Zero cross-relation with an identity psi; boosting becomes a no-op."""
        return cls(
            ConvParams.zeros(channels, channels),
            np.ones(channels),
            np.zeros(channels),
            PsiBlock.identity(channels, psi_kernel, psi_kernel),
        )

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator, psi_kernel: int = 3) -> "TebmParams":
        return cls(
            ConvParams.random(channels, channels, 1, rng),
            rng.uniform(0.5, 1.5, channels),
            rng.normal(0.0, 0.1, channels),
            PsiBlock.random(channels, channels, channels, rng, psi_kernel, psi_kernel),
        )

    def with_attention_scale(self, scale: Literal["raw", "area"]) -> "TebmParams":
        return replace(self, attention_scale=scale)

    def to_tensors(self) -> dict[str, np.ndarray]:
        return (
            conv_to_tensors("tebm.cross_linear", self.cross_linear)
            | {"tebm.ln_gain": self.ln_gain, "tebm.ln_shift": self.ln_shift}
            | psi_to_tensors("tebm.psi", self.psi)
            | {"tebm.attention_scale": np.array(ATTENTION_SCALES.index(self.attention_scale), dtype=np.int8)}
        )

    @classmethod
    def from_tensors(cls, blob: dict[str, np.ndarray]) -> "TebmParams":
        """Inverse of :meth:`to_tensors`; blobs without ``tebm.attention_scale`` load as ``"raw"``."""
        scale = int(blob.get("tebm.attention_scale", 0))
        if scale not in range(len(ATTENTION_SCALES)):
            raise ValueError(f"tebm.attention_scale: unknown code {scale}")
        return cls(
            conv_from_tensors("tebm.cross_linear", blob),
            blob["tebm.ln_gain"],
            blob["tebm.ln_shift"],
            psi_from_tensors("tebm.psi", blob),
            ATTENTION_SCALES[scale],
        )


def query_pool(id_prev: FeatureMap) -> Vector:
    """Global average pool of the previous ReID map (the query operator)."""
    return global_avg_pool(id_prev)


def salient_attention(query: Vector, id_curr: FeatureMap) -> FeatureMap:
    """Per-position cosine between the query and the current embeddings, 1×H×W."""
    return cosine_similarity_map(query, id_curr)


def channel_descriptor(id_curr: FeatureMap, w_c: FeatureMap, params: TebmParams) -> Vector:
    """Build the channel weights W_s = LN(Conv(ID_t^R · W_c)).

    Args:
        id_curr: Current ReID map, C×H×W.
        w_c: Salient attention, 1×H×W.
        params: Module parameters.

    Returns:
        Vector of length C.

    Raises:
        DimensionError: If the maps disagree spatially or with the params.
    """
    id_curr, w_c = as_feature_map(id_curr), as_feature_map(w_c)
    c, h, w = id_curr.shape
    if w_c.shape != (1, h, w):
        raise DimensionError(f"attention must be 1×{h}×{w}, got {w_c.shape}")
    if c != params.channels:
        raise DimensionError(f"map has {c} channels, params expect {params.channels}")
    weights = w_c.reshape(-1).astype(np.float64)
    if params.attention_scale == "area":
        weights = weights / (h * w)
    v = id_curr.reshape(c, -1).astype(np.float64) @ weights
    cross = params.cross_linear.weights[:, :, 0, 0].astype(np.float64) @ v + params.cross_linear.bias
    return layer_norm(cross, params.ln_gain, params.ln_shift)


def boost(id_curr: FeatureMap, w_s: Vector, params: TebmParams) -> FeatureMap:
    """ψ(ID_t ⊙ W_s ⊕ ID_t) with ⊙ scaling each channel by its weight."""
    id_curr = as_feature_map(id_curr)
    w_s = np.asarray(w_s, dtype=np.float32).reshape(-1)
    if w_s.size != id_curr.shape[0]:
        raise DimensionError(f"descriptor length {w_s.size} != channels {id_curr.shape[0]}")
    return psi_forward(id_curr * w_s[:, None, None] + id_curr, params.psi)


@dataclass(frozen=True)
class BoostInputs:
    """ReID maps of frames t-1 and t; both share one C×H×W shape."""

    id_prev: FeatureMap
    id_curr: FeatureMap

    def __post_init__(self) -> None:
        prev, curr = as_feature_map(self.id_prev), as_feature_map(self.id_curr)
        if prev.shape != curr.shape:
            raise DimensionError(f"frame maps differ: {prev.shape} vs {curr.shape}")
        object.__setattr__(self, "id_prev", prev)
        object.__setattr__(self, "id_curr", curr)


def tebm_forward(inputs: BoostInputs, params: TebmParams) -> FeatureMap:
    """Run the whole module on a pair of ReID maps.

    Args:
        inputs: ReID maps of the previous and current frame.
        params: Module parameters.

    Returns:
        Boosted ReID map with the shape of ``inputs.id_curr``.
    """
    w_c = salient_attention(query_pool(inputs.id_prev), inputs.id_curr)
    return boost(inputs.id_curr, channel_descriptor(inputs.id_curr, w_c, params), params)
