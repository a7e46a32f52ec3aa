"""Dense tensor primitives shared by TEBM, TDRM, the losses and the renderer.

Feature maps are plain ``numpy`` arrays of shape ``(channels, height, width)``
and dtype ``float32``. Reductions and products accumulate in ``float64`` and
cast back, so every operation here is deterministic for identical inputs.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

FeatureMap = np.ndarray
Vector = np.ndarray

LAYER_NORM_EPS = 1e-5
COSINE_NORM_GUARD = 1e-12


class DimensionError(ValueError):
    """Raised when tensor shapes violate an operation's contract."""


class UnsupportedConfigError(ValueError):
    """Raised for parameter layouts this library does not implement."""


class NumericError(ArithmeticError):
    """Raised when an operation produces non-finite values."""


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise NumericError(f"{op} produced non-finite values")
    return out


def as_feature_map(x: np.ndarray) -> FeatureMap:
    """Validate and coerce an array into a ``float32`` C×H×W feature map.

    Args:
        x: Array-like of rank 3.

    Returns:
        The same values as a contiguous ``float32`` array.

    Raises:
        DimensionError: If the rank is not 3 or any axis is empty.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 3 or 0 in x.shape:
        raise DimensionError(f"feature map must be non-empty C×H×W, got {x.shape}")
    return x


@dataclass(frozen=True)
class ConvParams:
    """Weights ``(out, in, kh, kw)`` and bias ``(out,)`` of a 2-D convolution."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.weights, dtype=np.float32)
        b = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        if w.ndim != 4:
            raise DimensionError(f"conv weights must be rank 4, got {w.shape}")
        if b.shape != (w.shape[0],):
            raise DimensionError(f"bias length {b.size} != out_channels {w.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    @classmethod
    def zeros(cls, out_ch: int, in_ch: int, k: int = 1) -> "ConvParams":
        return cls(np.zeros((out_ch, in_ch, k, k)), np.zeros(out_ch))

    @classmethod
    def identity(cls, channels: int, k: int = 1) -> "ConvParams":
        """Kernel whose center tap is the channel identity, so output == input."""
        w = np.zeros((channels, channels, k, k))
        w[np.arange(channels), np.arange(channels), k // 2, k // 2] = 1.0
        return cls(w, np.zeros(channels))

    @classmethod
    def random(
        cls, out_ch: int, in_ch: int, k: int, rng: np.random.Generator, scale: float | None = None
    ) -> "ConvParams":
        """He-style random init; ``scale`` overrides the weight std."""
        std = scale if scale is not None else np.sqrt(2.0 / (in_ch * k * k))
        return cls(rng.normal(0.0, std, (out_ch, in_ch, k, k)), rng.normal(0.0, 0.1, out_ch))


@dataclass(frozen=True)
class BatchNormParams:
    """Inference-form batch normalization, one entry per channel."""

    scale: np.ndarray
    shift: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-5

    def __post_init__(self) -> None:
        arrays = [np.ascontiguousarray(getattr(self, f), dtype=np.float32).reshape(-1)
                  for f in ("scale", "shift", "mean", "var")]
        if len({a.size for a in arrays}) != 1:
            raise DimensionError("batchnorm parameter vectors differ in length")
        if np.any(arrays[3] < 0):
            raise ValueError("batchnorm variance must be non-negative")
        for name, a in zip(("scale", "shift", "mean", "var"), arrays):
            object.__setattr__(self, name, a)

    @property
    def channels(self) -> int:
        return self.scale.size

    @classmethod
    def identity(cls, channels: int) -> "BatchNormParams":
        return cls(np.ones(channels), np.zeros(channels), np.zeros(channels), np.ones(channels))

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator) -> "BatchNormParams":
        return cls(
            rng.uniform(0.5, 1.5, channels),
            rng.normal(0.0, 0.1, channels),
            rng.normal(0.0, 0.1, channels),
            rng.uniform(0.5, 1.5, channels),
        )


@dataclass(frozen=True)
class PsiBlock:
    """Conv2d-BatchNorm-ReLU-Conv2d block."""

    conv1: ConvParams
    bn: BatchNormParams
    conv2: ConvParams

    def __post_init__(self) -> None:
        if self.bn.channels != self.conv1.out_channels:
            raise DimensionError("psi batchnorm width must equal conv1 out_channels")
        if self.conv2.in_channels != self.conv1.out_channels:
            raise DimensionError("psi conv2 in_channels must equal conv1 out_channels")

    @classmethod
    def identity(cls, channels: int, k1: int = 3, k2: int = 3) -> "PsiBlock":
        return cls(
            ConvParams.identity(channels, k1),
            BatchNormParams.identity(channels),
            ConvParams.identity(channels, k2),
        )

    @classmethod
    def random(
        cls, in_ch: int, mid_ch: int, out_ch: int, rng: np.random.Generator, k1: int = 3, k2: int = 3
    ) -> "PsiBlock":
        return cls(
            ConvParams.random(mid_ch, in_ch, k1, rng),
            BatchNormParams.random(mid_ch, rng),
            ConvParams.random(out_ch, mid_ch, k2, rng),
        )


def conv2d(x: FeatureMap, params: ConvParams) -> FeatureMap:
    """Stride-1 cross-correlation with "same" zero padding, plus bias.

    Args:
        x: Input map, C×H×W.
        params: Convolution weights with ``in_channels == C``.

    Returns:
        Map of shape ``out_channels×H×W``.

    Raises:
        DimensionError: If ``params.in_channels`` differs from ``x``'s channels.
        UnsupportedConfigError: If either kernel size is even.
    """
    x = as_feature_map(x)
    if params.in_channels != x.shape[0]:
        raise DimensionError(f"conv expects {params.in_channels} channels, got {x.shape[0]}")
    kh, kw = params.kernel_size
    if kh % 2 == 0 or kw % 2 == 0:
        raise UnsupportedConfigError(f"even kernel {kh}×{kw} has no centered same padding")
    _, h, w = x.shape
    padded = np.pad(x.astype(np.float64), ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    weights = params.weights.astype(np.float64)
    out = np.zeros((params.out_channels, h, w))
    for dy in range(kh):
        for dx in range(kw):
            out += np.einsum("oi,ihw->ohw", weights[:, :, dy, dx], padded[:, dy:dy + h, dx:dx + w])
    out += params.bias.astype(np.float64)[:, None, None]
    return _finite(out.astype(np.float32), "conv2d")


def conv1d_same(v: Vector, kernel: np.ndarray, bias: float = 0.0) -> Vector:
    """Single-channel 1-D cross-correlation with same zero padding (odd kernel)."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    kernel = np.asarray(kernel, dtype=np.float64).reshape(-1)
    if kernel.size % 2 == 0:
        raise UnsupportedConfigError(f"even 1-D kernel of size {kernel.size}")
    r = kernel.size // 2
    padded = np.pad(v, r)
    out = sum(kernel[i] * padded[i:i + v.size] for i in range(kernel.size)) + bias
    return _finite(np.asarray(out, dtype=np.float32), "conv1d_same")


def global_avg_pool(x: FeatureMap) -> Vector:
    """Per-channel mean over all spatial positions."""
    x = as_feature_map(x)
    return x.astype(np.float64).mean(axis=(1, 2)).astype(np.float32)


def max_pool_3x3_same(x: FeatureMap) -> FeatureMap:
    """3×3 stride-1 max pooling whose windows are clipped at the borders.

    Padding cells never win the max, so border peaks keep their value.
    """
    x = as_feature_map(x)
    _, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
    windows = [padded[:, dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)]
    return np.max(np.stack(windows), axis=0).astype(np.float32)


def cosine_similarity_map(query: Vector, keys: FeatureMap) -> FeatureMap:
    """Cosine between ``query`` and every spatial column of ``keys``.

    Positions where either norm falls below ``COSINE_NORM_GUARD`` get 0.

    Args:
        query: Vector of length C.
        keys: Map C×H×W.

    Returns:
        Map of shape 1×H×W with values in [-1, 1].

    Raises:
        DimensionError: If the query length differs from the key channels.
    """
    keys = as_feature_map(keys)
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.size != keys.shape[0]:
        raise DimensionError(f"query dim {q.size} != key channels {keys.shape[0]}")
    k = keys.astype(np.float64)
    dots = np.einsum("c,chw->hw", q, k)
    qn, kn = np.linalg.norm(q), np.linalg.norm(k, axis=0)
    valid = (kn >= COSINE_NORM_GUARD) & (qn >= COSINE_NORM_GUARD)
    cos = np.zeros_like(dots)
    np.divide(dots, qn * kn, out=cos, where=valid)
    return np.clip(cos, -1.0, 1.0)[None].astype(np.float32)


def layer_norm(x: Vector, gain: Vector, shift: Vector, eps: float = LAYER_NORM_EPS) -> Vector:
    """Normalize with the population variance, then apply gain and shift."""
    x, gain, shift = (np.asarray(a, dtype=np.float64).reshape(-1) for a in (x, gain, shift))
    if not x.size == gain.size == shift.size:
        raise DimensionError(f"layer_norm dims differ: {x.size}, {gain.size}, {shift.size}")
    out = (x - x.mean()) / np.sqrt(x.var() + eps) * gain + shift
    return _finite(out.astype(np.float32), "layer_norm")


def relu(x: FeatureMap) -> FeatureMap:
    return np.maximum(as_feature_map(x), 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64)).astype(np.float32)


def batchnorm_inference(x: FeatureMap, bn: BatchNormParams) -> FeatureMap:
    """Per-channel ``(x - mean) / sqrt(var + eps) * scale + shift``."""
    x = as_feature_map(x)
    if bn.channels != x.shape[0]:
        raise DimensionError(f"batchnorm has {bn.channels} channels, map has {x.shape[0]}")
    inv = (bn.scale.astype(np.float64) / np.sqrt(bn.var.astype(np.float64) + bn.eps))
    out = (x.astype(np.float64) - bn.mean[:, None, None]) * inv[:, None, None] + bn.shift[:, None, None]
    return _finite(out.astype(np.float32), "batchnorm")


def pointwise(
    x: FeatureMap,
    kind: Literal["relu", "sigmoid", "batchnorm"],
    bn: BatchNormParams | None = None,
) -> FeatureMap:
    """Elementwise activation or inference batchnorm.

    Args:
        x: Input map.
        kind: Which operator to apply.
        bn: Required when ``kind == "batchnorm"``.

    Returns:
        Map of the same shape.

    Raises:
        DimensionError: If batchnorm parameters do not match the channels.
        UnsupportedConfigError: For an unknown ``kind`` or missing ``bn``.
    """
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(as_feature_map(x))
    if kind == "batchnorm":
        if bn is None:
            raise UnsupportedConfigError("batchnorm requires parameters")
        return batchnorm_inference(x, bn)
    raise UnsupportedConfigError(f"unknown pointwise kind {kind!r}")


def matmul_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Dense K×D by D×M product accumulated in float64."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return _finite((a @ b).astype(np.float32), "matmul_rows")


def psi_forward(x: FeatureMap, psi: PsiBlock) -> FeatureMap:
    """conv1 → batchnorm → relu → conv2."""
    return conv2d(relu(batchnorm_inference(conv2d(x, psi.conv1), psi.bn)), psi.conv2)


def conv_to_tensors(prefix: str, params: ConvParams) -> dict[str, np.ndarray]:
    return {f"{prefix}.weights": params.weights, f"{prefix}.bias": params.bias}


def conv_from_tensors(prefix: str, blob: dict[str, np.ndarray]) -> ConvParams:
    return ConvParams(blob[f"{prefix}.weights"], blob[f"{prefix}.bias"])


def psi_to_tensors(prefix: str, psi: PsiBlock) -> dict[str, np.ndarray]:
    bn = {f"{prefix}.bn.{f}": getattr(psi.bn, f) for f in ("scale", "shift", "mean", "var")}
    bn[f"{prefix}.bn.eps"] = np.array(psi.bn.eps, dtype=np.float64)
    return conv_to_tensors(f"{prefix}.conv1", psi.conv1) | bn | conv_to_tensors(f"{prefix}.conv2", psi.conv2)


def psi_from_tensors(prefix: str, blob: dict[str, np.ndarray]) -> PsiBlock:
    bn = BatchNormParams(
        *(blob[f"{prefix}.bn.{f}"] for f in ("scale", "shift", "mean", "var")),
        eps=float(blob[f"{prefix}.bn.eps"]),
    )
    return PsiBlock(conv_from_tensors(f"{prefix}.conv1", blob), bn, conv_from_tensors(f"{prefix}.conv2", blob))
