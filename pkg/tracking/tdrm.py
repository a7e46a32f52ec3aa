"""Temporal Detection Refinement Module.

Peaks of the previous heatmap select trajectory embeddings, which are
correlated against the boosted current ReID map. The resulting K-channel
probability map is compressed to 32 channels, gated by max-pooled channel and
spatial attention, concatenated with the current feature map, and turned into a
refined heatmap.
"""

from dataclasses import dataclass

import numpy as np

from tracking.tensorlab import (
    BatchNormParams,
    ConvParams,
    DimensionError,
    FeatureMap,
    PsiBlock,
    as_feature_map,
    conv1d_same,
    conv2d,
    conv_from_tensors,
    conv_to_tensors,
    matmul_rows,
    max_pool_3x3_same,
    psi_forward,
    psi_from_tensors,
    psi_to_tensors,
    sigmoid,
)

DEFAULT_K = 100
REDUCED_CHANNELS = 32
HEATMAP_CLAMP = 1e-4


@dataclass(frozen=True)
class TopKPicks:
    """Top-k heatmap peaks and the embeddings gathered at their locations."""

    indices: np.ndarray
    scores: np.ndarray
    embeddings: np.ndarray
    shape: tuple[int, int, int]

    @property
    def k(self) -> int:
        return self.indices.size

    @property
    def classes(self) -> np.ndarray:
        return self.indices // (self.shape[1] * self.shape[2])

    @property
    def ys(self) -> np.ndarray:
        return self.indices % (self.shape[1] * self.shape[2]) // self.shape[2]

    @property
    def xs(self) -> np.ndarray:
        return self.indices % self.shape[2]


@dataclass(frozen=True)
class TdrmParams:
    """Parameters of the refinement module.

    ``reduce`` compresses K correlation channels to 32, ``fc_kernel``/``fc_bias``
    form the 1-D channel-attention conv, ``fs`` is the 7×7 spatial-attention
    conv and ``psi`` maps the 64+32 concatenation to C heatmap channels.
    """

    reduce: ConvParams
    fc_kernel: np.ndarray
    fc_bias: float
    fs: ConvParams
    psi: PsiBlock

    def __post_init__(self) -> None:
        kernel = np.asarray(self.fc_kernel, dtype=np.float32).reshape(-1)
        if self.reduce.kernel_size != (1, 1):
            raise DimensionError("reduce must be a 1×1 conv")
        if kernel.size != 3:
            raise DimensionError("fc must be a 3-tap 1-D conv")
        if (self.fs.in_channels, self.fs.out_channels) != (1, 1):
            raise DimensionError("fs must map one channel to one channel")
        if self.psi.conv1.in_channels <= self.reduced_channels:
            raise DimensionError("psi input must be feature channels + reduced channels")
        object.__setattr__(self, "fc_kernel", kernel)
        object.__setattr__(self, "fc_bias", float(self.fc_bias))

    @property
    def k(self) -> int:
        return self.reduce.in_channels

    @property
    def reduced_channels(self) -> int:
        return self.reduce.out_channels

    @property
    def fm_channels(self) -> int:
        return self.psi.conv1.in_channels - self.reduced_channels

    @property
    def num_classes(self) -> int:
        return self.psi.conv2.out_channels

    @classmethod
    def random(
        cls,
        k: int,
        num_classes: int,
        rng: np.random.Generator,
        fm_channels: int = 64,
        reduced: int = REDUCED_CHANNELS,
    ) -> "TdrmParams":
        return cls(
            ConvParams.random(reduced, k, 1, rng),
            rng.normal(0.0, 0.5, 3),
            float(rng.normal(0.0, 0.1)),
            ConvParams.random(1, 1, 7, rng),
            PsiBlock.random(fm_channels + reduced, fm_channels, num_classes, rng, 3, 1),
        )

    @classmethod
    def zero_attention(
        cls, k: int, num_classes: int, rng: np.random.Generator, fm_channels: int = 64, reduced: int = REDUCED_CHANNELS
    ) -> "TdrmParams":
        """Random reduce/psi with all attention weights and biases zeroed (both gates 0.5)."""
        base = cls.random(k, num_classes, rng, fm_channels, reduced)
        return cls(base.reduce, np.zeros(3), 0.0, ConvParams.zeros(1, 1, 7), base.psi)

    @classmethod
    def evidence_prior(
        cls,
        k: int,
        num_classes: int,
        fm_channels: int = 64,
        reduced: int = REDUCED_CHANNELS,
        evidence_weight: float = 0.05,
        fm_weight: float = 0.0,
        bn_shift: float = 0.1,
        bias: float = -2.0,
    ) -> "TdrmParams":
        """Hand-set nonnegative parameterization where correlation evidence can only raise the heatmap.

        Conv weights are nonnegative, batchnorm scale is 1 with a positive shift so
        the ReLU stays open, and the last bias keeps the no-evidence output well
        inside the sigmoid's linear range.
        """
        w1 = np.zeros((fm_channels, fm_channels + reduced, 3, 3))
        w1[:, :fm_channels] = fm_weight
        w1[:, fm_channels:] = evidence_weight
        bn = BatchNormParams(np.ones(fm_channels), np.full(fm_channels, bn_shift),
                             np.zeros(fm_channels), np.ones(fm_channels))
        conv2 = ConvParams(np.full((num_classes, fm_channels, 1, 1), evidence_weight), np.full(num_classes, bias))
        return cls(
            ConvParams(np.full((reduced, k, 1, 1), 1.0 / k), np.zeros(reduced)),
            np.full(3, evidence_weight),
            0.0,
            ConvParams(np.full((1, 1, 7, 7), evidence_weight), np.zeros(1)),
            PsiBlock(ConvParams(w1, np.zeros(fm_channels)), bn, conv2),
        )

    def to_tensors(self) -> dict[str, np.ndarray]:
        return (
            conv_to_tensors("tdrm.reduce", self.reduce)
            | {"tdrm.fc_kernel": self.fc_kernel, "tdrm.fc_bias": np.array(self.fc_bias, dtype=np.float32)}
            | conv_to_tensors("tdrm.fs", self.fs)
            | psi_to_tensors("tdrm.psi", self.psi)
        )

    @classmethod
    def from_tensors(cls, blob: dict[str, np.ndarray]) -> "TdrmParams":
        return cls(
            conv_from_tensors("tdrm.reduce", blob),
            blob["tdrm.fc_kernel"],
            float(blob["tdrm.fc_bias"]),
            conv_from_tensors("tdrm.fs", blob),
            psi_from_tensors("tdrm.psi", blob),
        )


def peak_mask(heatmap: FeatureMap) -> FeatureMap:
    """Zero every cell that is not the maximum of its 3×3 window."""
    heatmap = as_feature_map(heatmap)
    return np.where(heatmap == max_pool_3x3_same(heatmap), heatmap, 0.0).astype(np.float32)


def topk_flat(scores: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries, ties broken by ascending index."""
    flat = np.asarray(scores, dtype=np.float64).reshape(-1)
    if not 1 <= k <= flat.size:
        raise ValueError(f"k must be in [1, {flat.size}], got {k}")
    return np.argsort(-flat, kind="stable")[:k]


def pick_topk(hm_prev: FeatureMap, id_prev: FeatureMap, k: int) -> TopKPicks:
    """Select the k strongest heatmap peaks and gather their embeddings.

    Args:
        hm_prev: Heatmap of frame t-1, C×H×W.
        id_prev: Raw ReID map of frame t-1, D×H×W.
        k: Number of picks, ``1 <= k <= C·H·W``.

    Returns:
        Picks sorted by non-increasing score.

    Raises:
        ValueError: If ``k`` is out of range.
        DimensionError: If the maps disagree spatially.
    """
    hm_prev, id_prev = as_feature_map(hm_prev), as_feature_map(id_prev)
    if hm_prev.shape[1:] != id_prev.shape[1:]:
        raise DimensionError(f"heatmap {hm_prev.shape} and ReID map {id_prev.shape} differ spatially")
    masked = peak_mask(hm_prev)
    idx = topk_flat(masked, k)
    _, h, w = hm_prev.shape
    ys, xs = idx % (h * w) // w, idx % w
    return TopKPicks(
        indices=idx.astype(np.int64),
        scores=masked.reshape(-1)[idx],
        embeddings=np.ascontiguousarray(id_prev[:, ys, xs].T),
        shape=hm_prev.shape,
    )


def correlation(picks: TopKPicks, id_boosted: FeatureMap) -> FeatureMap:
    """Raw dot products between each picked embedding and every current position, K×H×W."""
    id_boosted = as_feature_map(id_boosted)
    d, h, w = id_boosted.shape
    if picks.embeddings.shape[1] != d:
        raise DimensionError(f"embeddings are {picks.embeddings.shape[1]}-d, map has {d} channels")
    return matmul_rows(picks.embeddings, id_boosted.reshape(d, -1)).reshape(-1, h, w)


def max_csam(m: FeatureMap, params: TdrmParams) -> FeatureMap:
    """Compress K→32, then gate by channel and spatial max attention.

    Args:
        m: Correlation map, K×H×W.
        params: Module parameters.

    Returns:
        Aggregated similarity map, 32×H×W.
    """
    m = as_feature_map(m)
    if m.shape[0] != params.k:
        raise DimensionError(f"correlation has {m.shape[0]} channels, reduce expects {params.k}")
    m_r = conv2d(m, params.reduce)
    channel_max = m_r.max(axis=(1, 2))
    spatial_max = m_r.max(axis=0, keepdims=True)
    gate_c = sigmoid(conv1d_same(channel_max, params.fc_kernel, params.fc_bias))
    gate_s = sigmoid(conv2d(spatial_max, params.fs))
    return (gate_c[:, None, None] * gate_s * m_r).astype(np.float32)


def refine_heatmap(fm_curr: FeatureMap, m_hat: FeatureMap, params: TdrmParams) -> FeatureMap:
    """σ(ψ([FM_t, M̂])), clamped into [1e-4, 1 - 1e-4]."""
    fm_curr, m_hat = as_feature_map(fm_curr), as_feature_map(m_hat)
    if fm_curr.shape[1:] != m_hat.shape[1:]:
        raise DimensionError(f"feature map {fm_curr.shape} and M̂ {m_hat.shape} differ spatially")
    logits = psi_forward(np.concatenate([fm_curr, m_hat]), params.psi)
    return np.clip(sigmoid(logits), HEATMAP_CLAMP, 1.0 - HEATMAP_CLAMP)


def tdrm_forward(
    hm_prev: FeatureMap,
    id_prev: FeatureMap,
    id_boosted: FeatureMap,
    fm_curr: FeatureMap,
    k: int,
    params: TdrmParams,
) -> FeatureMap:
    """Pick up & correlate, aggregate with MAX-CSAM, and refine the heatmap.

    Args:
        hm_prev: Heatmap of frame t-1.
        id_prev: Raw ReID map of frame t-1.
        id_boosted: TEBM output for frame t.
        fm_curr: Backbone feature map of frame t.
        k: Number of trajectory picks; must match ``params.k``.
        params: Module parameters.

    Returns:
        Refined heatmap of frame t, C×H×W.
    """
    picks = pick_topk(hm_prev, id_prev, k)
    return refine_heatmap(fm_curr, max_csam(correlation(picks, id_boosted), params), params)
