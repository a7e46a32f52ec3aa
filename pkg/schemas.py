# stcmot-desk/schemas.py
"""
Pydantic models for run configuration: tracker, synthetic scene, detection
corruption, map layout and output paths, plus the YAML loader.
"""

from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy.stats import chi2


class ConfigError(ValueError):
    """Raised when a run-config document is unreadable or invalid."""


class _Strict(BaseModel):
    """Base for config sections: unknown keys are rejected, instances are immutable."""

    model_config = ConfigDict(extra="forbid", frozen=True)


# --- Tracker ---


class TrackerConfig(_Strict):
    """Online association settings."""

    tau: float = Field(0.4, gt=0.0, lt=1.0, description="High/low detection confidence split.")
    max_lost: int = Field(30, ge=1, description="Frames an unmatched track is retained.")
    gate: float = Field(
        float(chi2.ppf(0.95, 4)), gt=0.0, description="Squared-Mahalanobis gate (chi-square 0.95, 4 dof)."
    )
    appearance_match_threshold: float = Field(0.4, ge=0.0, le=2.0, description="Max cosine distance in stage 1.")
    iou_threshold_high: float = Field(0.5, ge=0.0, le=1.0, description="Min IOU for stage-2 matches.")
    iou_threshold_low: float = Field(0.5, ge=0.0, le=1.0, description="Min IOU for low-confidence recovery.")
    ema_alpha: float = Field(0.9, ge=0.0, le=1.0, description="Weight of the old embedding in the EMA.")
    min_score_new: float = Field(0.4, ge=0.0, le=1.0, description="Min score for starting a track.")
    low_score_min: float = Field(
        0.0, ge=0.0, le=1.0, description="Low-confidence detections below this skip stage 3 and are discarded."
    )
    min_hits: int = Field(2, ge=1, description="Consecutive hits before a track is reported.")
    motion_weight: float = Field(
        0.0, ge=0.0, le=1.0, description="Blend of gated Mahalanobis into the stage-1 cost (0 = pure gating)."
    )
    class_aware: bool = Field(True, description="Only match tracks and detections of the same class.")


# --- Synthetic data ---


class SceneConfig(_Strict):
    """Synthetic UAV scene: constant-velocity targets plus shared ego drift."""

    num_targets: int = Field(20, ge=0)
    num_frames: int = Field(200, ge=1)
    image_w: int = Field(320, gt=0, description="Image width in pixels.")
    image_h: int = Field(240, gt=0, description="Image height in pixels.")
    speed_range: tuple[float, float] = Field((0.5, 2.0), description="Target speed, pixels/frame.")
    ego_amplitude: float = Field(1.0, ge=0.0, description="Peak global drift, pixels/frame.")
    ego_period: float = Field(60.0, gt=0.0, description="Frames per drift oscillation.")
    birth_rate: float = Field(0.0, ge=0.0, le=1.0, description="Per-frame probability of a new target.")
    death_rate: float = Field(0.0, ge=0.0, le=1.0, description="Per-frame, per-target exit probability.")
    box_size_range: tuple[float, float] = Field((16.0, 32.0), description="Box side length, pixels.")
    num_classes: int = Field(2, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_ranges(self) -> "SceneConfig":
        lo, hi = self.speed_range
        if not 0.0 <= lo <= hi:
            raise ValueError("speed_range must satisfy 0 <= low <= high")
        lo, hi = self.box_size_range
        if not 0.0 < lo <= hi:
            raise ValueError("box_size_range must satisfy 0 < low <= high")
        if hi >= min(self.image_w, self.image_h):
            raise ValueError("boxes must fit inside the image")
        return self


class CorruptionConfig(_Strict):
    """How ground truth is degraded into a detection stream."""

    miss_rate: float = Field(0.05, ge=0.0, le=1.0)
    fp_rate: float = Field(0.05, ge=0.0, le=1.0, description="False positives per ground-truth box.")
    center_noise_sigma: float = Field(1.0, ge=0.0, description="Center jitter std, pixels.")
    embed_noise_sigma: float = Field(
        0.1, ge=0.0, description="Expected norm of the embedding noise; each component gets sigma / sqrt(embed_dim)."
    )
    score_true_mean: float = Field(0.8, ge=0.0, le=1.0)
    score_fp_mean: float = Field(0.3, ge=0.0, le=1.0)
    score_sigma: float = Field(0.05, ge=0.0)
    embed_dim: int = Field(128, ge=1, le=0xFFFF, description="Length of detection embeddings.")
    seed: int = Field(1, ge=0, lt=2**64)


class MapLayout(_Strict):
    """Feature-map geometry used by the renderer and the modules self-test."""

    num_classes: int = Field(2, ge=1, description="Heatmap channels C.")
    height: int = Field(16, ge=1)
    width: int = Field(24, ge=1)
    stride: int = Field(4, ge=1)
    embed_dim: int = Field(16, ge=1)
    fm_channels: int = Field(64, ge=1)
    k: int = Field(10, ge=1, description="Trajectory picks for refinement.")


class OutputPaths(_Strict):
    """Default file names inside a sequence directory."""

    gt: str = "gt.txt"
    detections: str = "det.txt"
    embeddings: str = "det.emb"
    results: str = "results.txt"
    report: str = "report.json"


class RunConfig(_Strict):
    """Top-level run document."""

    seed: int = Field(0, ge=0, lt=2**64)
    tracker: TrackerConfig = Field(default_factory=TrackerConfig)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    corruption: CorruptionConfig = Field(default_factory=CorruptionConfig)
    layout: MapLayout = Field(default_factory=MapLayout)
    outputs: OutputPaths = Field(default_factory=OutputPaths)
    iou_min: float = Field(0.5, gt=0.0, le=1.0, description="Evaluation match threshold.")
    single_class: bool = Field(False, description="Ignore class ids during evaluation.")


def _format_validation_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = "unknown key" if err["type"] == "extra_forbidden" else err["msg"]
        parts.append(f"{path}: {msg}")
    return "; ".join(parts)


def parse_run_config(data: dict[str, Any] | None) -> RunConfig:
    """Validate a config mapping.

    Args:
        data: Parsed document; ``None`` means all defaults.

    Returns:
        Validated configuration.

    Raises:
        ConfigError: Naming each offending key path.
    """
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_run_config(path: str | Path | None) -> RunConfig:
    """Read and validate a YAML run config; ``None`` gives the defaults.

    Raises:
        ConfigError: If the file cannot be parsed or fails validation.
    """
    if path is None:
        return RunConfig()
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return parse_run_config(data)


def with_seed(config: RunConfig, seed: int | None) -> RunConfig:
    """Override the run seed and derive the scene and corruption seeds from it."""
    if seed is None:
        return config
    return config.model_copy(
        update={
            "seed": seed,
            "scene": config.scene.model_copy(update={"seed": seed}),
            "corruption": config.corruption.model_copy(update={"seed": seed + 1}),
        }
    )
