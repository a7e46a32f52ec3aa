"""Training objective: heatmap focal loss, L1 box regression, ReID cross-entropy
and the uncertainty-weighted total.

Each loss returns its value together with the analytic gradient with respect to
its predictions, computed in float64.
"""

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, field_validator
from scipy.special import log_softmax, softmax

from tracking.tensorlab import DimensionError, FeatureMap, as_feature_map

PRED_CLAMP = 1e-6
FOCAL_ALPHA = 2
FOCAL_BETA = 4


@dataclass(frozen=True)
class HeatTarget:
    """Ground-truth heatmap; cells equal to 1 are the positives."""

    map: FeatureMap
    positives: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        hm = as_feature_map(self.map)
        if hm.min() < 0.0 or hm.max() > 1.0:
            raise ValueError("heat target entries must lie in [0, 1]")
        found = sorted(map(tuple, np.argwhere(hm == 1.0).tolist()))
        if self.positives and sorted(map(tuple, self.positives)) != found:
            raise ValueError("listed positives do not match the cells equal to 1")
        object.__setattr__(self, "map", hm)
        object.__setattr__(self, "positives", found)

    @classmethod
    def from_map(cls, hm: FeatureMap) -> "HeatTarget":
        return cls(hm)


@dataclass(frozen=True)
class RegTarget:
    """Offset and size targets at object centers, in feature-map units."""

    centers: list[tuple[int, int]]
    offsets: np.ndarray
    sizes: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.centers)
        offsets = np.asarray(self.offsets, dtype=np.float64).reshape(n, 2)
        sizes = np.asarray(self.sizes, dtype=np.float64).reshape(n, 2)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "sizes", sizes)

    def to_dense(self, height: int, width: int) -> tuple[FeatureMap, FeatureMap]:
        """Scatter the targets into 2×H×W offset and size maps (zeros elsewhere)."""
        off = np.zeros((2, height, width), dtype=np.float32)
        wh = np.zeros((2, height, width), dtype=np.float32)
        for (y, x), o, s in zip(self.centers, self.offsets, self.sizes):
            off[:, y, x] = o
            wh[:, y, x] = s
        return off, wh


@dataclass(frozen=True)
class IdTarget:
    """Identity labels at object centers and the N-way classifier over embeddings."""

    centers: list[tuple[int, int]]
    labels: np.ndarray
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        weight = np.asarray(self.weight, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if labels.size != len(self.centers):
            raise DimensionError("one label per center is required")
        if weight.ndim != 2 or bias.size != weight.shape[0]:
            raise DimensionError("classifier must be N×D with N biases")
        if labels.size and (labels.min() < 0 or labels.max() >= weight.shape[0]):
            raise ValueError(f"labels must lie in [0, {weight.shape[0]})")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)

    @property
    def num_ids(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class L1Result:
    off: float
    wh: float
    grad_off: np.ndarray
    grad_wh: np.ndarray

    @property
    def total(self) -> float:
        return self.off + self.wh


class DetLosses(BaseModel):
    """Detection-branch component losses."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    heat_prev: NonNegativeFloat
    heat_curr: NonNegativeFloat
    off: NonNegativeFloat
    wh: NonNegativeFloat

    @property
    def total(self) -> float:
        return self.heat_prev + self.heat_curr + self.off + self.wh


class ReidLosses(BaseModel):
    """ReID-branch component losses for both frames."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    reid_prev: NonNegativeFloat
    reid_curr: NonNegativeFloat

    @property
    def total(self) -> float:
        return self.reid_prev + self.reid_curr


class LossState(BaseModel):
    """Learnable log-variance weights of the two branches."""

    model_config = ConfigDict(extra="forbid")

    beta1: float = Field(0.0, description="Detection branch weight.")
    beta2: float = Field(0.0, description="ReID branch weight.")

    @field_validator("beta1", "beta2")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("beta must be finite")
        return v


def focal_heat_loss(pred: FeatureMap, target: HeatTarget) -> tuple[float, np.ndarray]:
    """Penalty-reduced pixel-wise focal loss with its gradient.

    Positives contribute ``-(1-p)^2 log p``, the rest ``-(1-t)^4 p^2 log(1-p)``;
    the sum is divided by ``max(1, #positives)``. Predictions are clamped into
    ``[1e-6, 1 - 1e-6]`` and the gradient is zero where the clamp is active.

    Args:
        pred: Predicted heatmap in (0, 1).
        target: Ground-truth heatmap.

    Returns:
        Tuple of (loss, gradient with the shape of ``pred``).

    Raises:
        DimensionError: If shapes differ.
    """
    raw = np.asarray(pred, dtype=np.float64)
    if raw.shape != target.map.shape:
        raise DimensionError(f"prediction {raw.shape} != target {target.map.shape}")
    p = np.clip(raw, PRED_CLAMP, 1.0 - PRED_CLAMP)
    t = target.map.astype(np.float64)
    pos = t == 1.0
    neg_w = (1.0 - t) ** FOCAL_BETA
    norm = max(1, int(pos.sum()))

    pos_loss = -((1.0 - p) ** FOCAL_ALPHA) * np.log(p)
    neg_loss = -neg_w * p ** FOCAL_ALPHA * np.log1p(-p)
    loss = np.where(pos, pos_loss, neg_loss).sum() / norm

    pos_grad = 2.0 * (1.0 - p) * np.log(p) - (1.0 - p) ** 2 / p
    neg_grad = -neg_w * (2.0 * p * np.log1p(-p) - p ** 2 / (1.0 - p))
    grad = np.where(pos, pos_grad, neg_grad) / norm
    grad[(raw < PRED_CLAMP) | (raw > 1.0 - PRED_CLAMP)] = 0.0
    return float(loss), grad


def _masked_l1(pred: FeatureMap, centers: list[tuple[int, int]], target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    grad = np.zeros_like(pred)
    if not centers:
        return 0.0, grad
    ys, xs = np.array(centers).T
    diff = pred[:, ys, xs].T - target
    n = diff.size
    np.add.at(grad, (slice(None), ys, xs), (np.sign(diff) / n).T)
    return float(np.abs(diff).sum() / n), grad


def l1_reg_loss(pred_off: FeatureMap, pred_wh: FeatureMap, target: RegTarget) -> L1Result:
    """Masked mean absolute error of the offset and size heads at object centers.

    Args:
        pred_off: Predicted offsets, 2×H×W.
        pred_wh: Predicted sizes, 2×H×W.
        target: Centers with their offsets and sizes.

    Returns:
        Per-head losses and gradients; the subgradient at 0 is 0.

    Raises:
        ValueError: If a center lies outside the maps.
        DimensionError: If a head is not 2×H×W.
    """
    pred_off, pred_wh = np.asarray(pred_off), np.asarray(pred_wh)
    if pred_off.ndim != 3 or pred_off.shape[0] != 2 or pred_off.shape != pred_wh.shape:
        raise DimensionError(f"regression heads must both be 2×H×W, got {pred_off.shape}, {pred_wh.shape}")
    _, h, w = pred_off.shape
    for y, x in target.centers:
        if not (0 <= y < h and 0 <= x < w):
            raise ValueError(f"center ({y}, {x}) outside {h}×{w} map")
    off, g_off = _masked_l1(pred_off, target.centers, target.offsets)
    wh, g_wh = _masked_l1(pred_wh, target.centers, target.sizes)
    return L1Result(off, wh, g_off, g_wh)


def gather_embeddings(id_map: FeatureMap, centers: list[tuple[int, int]]) -> np.ndarray:
    """Embeddings at the given (y, x) centers as an n×D matrix."""
    id_map = np.asarray(id_map, dtype=np.float64)
    if not centers:
        return np.zeros((0, id_map.shape[0]))
    ys, xs = np.array(centers).T
    return id_map[:, ys, xs].T


def reid_ce_loss_from_embeddings(emb: np.ndarray, target: IdTarget) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy of embeddings under the target classifier."""
    emb = np.asarray(emb, dtype=np.float64)
    if emb.shape[0] == 0:
        return 0.0, np.zeros_like(emb)
    logits = emb @ target.weight.T + target.bias
    n = emb.shape[0]
    loss = -log_softmax(logits, axis=1)[np.arange(n), target.labels].mean()
    g_logits = softmax(logits, axis=1)
    g_logits[np.arange(n), target.labels] -= 1.0
    return float(loss), (g_logits / n) @ target.weight


def reid_ce_loss(id_map: FeatureMap, target: IdTarget) -> tuple[float, np.ndarray]:
    """ReID classification loss at object centers.

    Args:
        id_map: Embedding map, D×H×W.
        target: Centers, labels and the N-way classifier (N >= 2).

    Returns:
        Tuple of (loss, gradient with respect to the gathered n×D embeddings).
        Empty centers give zero loss and an empty gradient.

    Raises:
        ValueError: If the classifier has fewer than two classes.
    """
    if target.num_ids < 2:
        raise ValueError("the identity classifier needs at least two classes")
    return reid_ce_loss_from_embeddings(gather_embeddings(id_map, target.centers), target)


def total_loss(det: DetLosses, reid: ReidLosses, state: LossState) -> tuple[float, float, float]:
    """Uncertainty-weighted sum of both branches and its β-gradients.

    ``L = ½[e^{-β1}·ΣL_det + e^{-β2}·ΣL_reid] + β1 + β2``.

    Returns:
        Tuple of (L, dL/dβ1, dL/dβ2).
    """
    w1, w2 = np.exp(-state.beta1), np.exp(-state.beta2)
    loss = 0.5 * (w1 * det.total + w2 * reid.total) + state.beta1 + state.beta2
    return float(loss), float(1.0 - 0.5 * w1 * det.total), float(1.0 - 0.5 * w2 * reid.total)


def stationary_betas(det: DetLosses, reid: ReidLosses) -> LossState:
    """β values where both gradients vanish, ``β = ln(ΣL/2)``; needs positive sums."""
    if det.total <= 0.0 or reid.total <= 0.0:
        raise ValueError("stationary betas need strictly positive branch losses")
    return LossState(beta1=float(np.log(det.total / 2.0)), beta2=float(np.log(reid.total / 2.0)))


class TrainingSchedule(BaseModel):
    """Optimizer settings of the full-scale training run; nothing here trains."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    optimizer: str = "adam"
    base_lr: float = Field(7e-5, gt=0.0)
    decayed_lr: float = Field(7e-6, gt=0.0)
    decay_epoch: int = Field(20, ge=0, description="Epochs run at base_lr.")
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(16, ge=1)
    input_size: tuple[int, int, int] = (3, 608, 1088)
    max_frame_interval: int = Field(3, ge=1, description="Largest gap between the two frames of a pair.")

    def learning_rate(self, epoch: int) -> float:
        """Step schedule over zero-based epochs."""
        if not 0 <= epoch < self.epochs:
            raise ValueError(f"epoch must be in [0, {self.epochs}), got {epoch}")
        return self.base_lr if epoch < self.decay_epoch else self.decayed_lr

    def feature_map_size(self, stride: int = 4) -> tuple[int, int]:
        _, h, w = self.input_size
        return h // stride, w // stride
