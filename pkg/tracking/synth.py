"""Synthetic UAV scenes: ground truth, corrupted detection streams and
CenterNet-style training maps.

Everything here is a pure function of its inputs and seeds.
"""

import hashlib
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from logger_config import tracking_logger
from schemas import CorruptionConfig, MapLayout, SceneConfig
from tracking.losses import HeatTarget, IdTarget, RegTarget
from tracking.matching import iou_matrix
from tracking.records import AnnotatedBox, Detection, DetectionFrames, GroundTruth
from tracking.tensorlab import DimensionError, FeatureMap

MIN_OVERLAP = 0.7
COORD_DECIMALS = 2


@dataclass
class _Target:
    id: int
    x: float
    y: float
    w: float
    h: float
    vx: float
    vy: float
    class_id: int


def _spawn(rng: np.random.Generator, tid: int, cfg: SceneConfig) -> _Target:
    w, h = rng.uniform(*cfg.box_size_range, size=2)
    x = rng.uniform(0.0, cfg.image_w - w)
    y = rng.uniform(0.0, cfg.image_h - h)
    speed = rng.uniform(*cfg.speed_range)
    angle = rng.uniform(0.0, 2 * np.pi)
    cls = int(rng.integers(1, cfg.num_classes + 1))
    return _Target(tid, x, y, w, h, speed * np.cos(angle), speed * np.sin(angle), cls)


def _bounce(pos: float, vel: float, size: float, limit: float) -> tuple[float, float]:
    hi = limit - size
    if pos < 0.0:
        pos, vel = -pos, -vel
    elif pos > hi:
        pos, vel = 2 * hi - pos, -vel
    return float(np.clip(pos, 0.0, hi)), vel


def ego_drift(frame: int, cfg: SceneConfig, phase: tuple[float, float] = (0.0, 0.0)) -> tuple[float, float]:
    """Global camera-induced translation added to every target at ``frame``."""
    t = 2 * np.pi * frame / cfg.ego_period
    return cfg.ego_amplitude * np.cos(t + phase[0]), cfg.ego_amplitude * np.sin(t + phase[1])


def generate_scene(config: SceneConfig) -> GroundTruth:
    """Constant-velocity targets with reflective boundaries plus a shared ego drift.

    Frames are numbered from 1 and every frame is present (possibly empty).
    Coordinates are rounded to two decimals so they survive the text format.
    """
    rng = np.random.default_rng(config.seed)
    phase = tuple(rng.uniform(0.0, 2 * np.pi, size=2))
    alive = [_spawn(rng, tid, config) for tid in range(1, config.num_targets + 1)]
    next_id = config.num_targets + 1
    gt: GroundTruth = {}

    for frame in range(1, config.num_frames + 1):
        if frame > 1:
            if config.death_rate > 0.0:
                alive = [t for t in alive if rng.random() >= config.death_rate]
            if config.birth_rate > 0.0 and rng.random() < config.birth_rate:
                alive.append(_spawn(rng, next_id, config))
                next_id += 1
            ex, ey = ego_drift(frame, config, phase)
            for t in alive:
                t.x, t.vx = _bounce(t.x + t.vx + ex, t.vx, t.w, config.image_w)
                t.y, t.vy = _bounce(t.y + t.vy + ey, t.vy, t.h, config.image_h)
        gt[frame] = [
            AnnotatedBox(frame, t.id, tuple(np.round([t.x, t.y, t.w, t.h], COORD_DECIMALS)), t.class_id)
            for t in alive
        ]
    tracking_logger.info(
        "generated scene seed=%d: %d frames, %d identities", config.seed, config.num_frames, next_id - 1
    )
    return gt


def make_prototypes(ids: Iterable[int], dim: int, seed: int = 0, nonnegative: bool = False) -> dict[int, np.ndarray]:
    """One random unit vector per identity, drawn in ascending id order."""
    rng = np.random.default_rng(seed)
    protos = {}
    for tid in sorted(set(ids)):
        v = rng.standard_normal(dim)
        if nonnegative:
            v = np.abs(v)
        protos[tid] = v / np.linalg.norm(v)
    return protos


def gt_ids(gt: GroundTruth) -> list[int]:
    return sorted({b.id for boxes in gt.values() for b in boxes})


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def corrupt(
    gt: GroundTruth,
    config: CorruptionConfig,
    prototypes: Mapping[int, np.ndarray],
    image_size: tuple[int, int] = (320, 240),
) -> DetectionFrames:
    """Degrade ground truth into a detector output stream.

    Each box is dropped with ``miss_rate``; survivors get Gaussian center jitter,
    a noisy prototype embedding and a score around ``score_true_mean``. Each
    ground-truth box also spawns, with probability ``fp_rate``, a false positive
    of the same size and class at a random position with a random embedding.

    Args:
        gt: Ground truth by frame.
        config: Corruption rates and noise levels.
        prototypes: Unit embedding per identity.
        image_size: (width, height) in pixels, bounds for false positives.

    Returns:
        Detections by frame, true detections first in ground-truth order.

    Raises:
        ValueError: If an identity has no prototype.
    """
    missing = [tid for tid in gt_ids(gt) if tid not in prototypes]
    if missing:
        raise ValueError(f"no prototype for identities {missing[:5]}")
    dim = len(next(iter(prototypes.values()))) if prototypes else 1
    rng = np.random.default_rng(config.seed)
    img_w, img_h = image_size
    out: DetectionFrames = {}

    for frame in sorted(gt):
        dets, fps = [], []
        for b in gt[frame]:
            left, top, w, h = b.box
            if rng.random() >= config.miss_rate:
                dx, dy = config.center_noise_sigma * rng.standard_normal(2)
                emb = prototypes[b.id] + config.embed_noise_sigma * rng.standard_normal(dim) / np.sqrt(dim)
                score = np.clip(config.score_true_mean + config.score_sigma * rng.standard_normal(), 0.0, 1.0)
                dets.append(Detection(np.array([left + dx, top + dy, w, h]), score, b.class_id, emb))
            if rng.random() < config.fp_rate:
                x = rng.uniform(0.0, max(img_w - w, 0.0))
                y = rng.uniform(0.0, max(img_h - h, 0.0))
                score = np.clip(config.score_fp_mean + config.score_sigma * rng.standard_normal(), 0.0, 1.0)
                fps.append(Detection(np.array([x, y, w, h]), score, b.class_id, _unit(rng, dim)))
        out[frame] = dets + fps
    return out


def inject_dropouts(
    dets: DetectionFrames,
    gt: GroundTruth,
    dropouts: Mapping[int, int],
    length: int = 3,
    iou_min: float = 0.5,
) -> tuple[DetectionFrames, list[tuple[int, int]]]:
    """Remove a target's detection for ``length`` consecutive frames.

    Args:
        dets: Detection stream.
        gt: Ground truth the stream was made from.
        dropouts: Target id -> first dropped frame.
        length: Frames per dropout.
        iou_min: Overlap that identifies the target's detection.

    Returns:
        The thinned stream and the (frame, target id) pairs actually dropped.
    """
    out = {f: list(d) for f, d in dets.items()}
    dropped = []
    for tid, start in sorted(dropouts.items()):
        for frame in range(start, start + length):
            box = next((b for b in gt.get(frame, []) if b.id == tid), None)
            if box is None or not out.get(frame):
                continue
            ious = iou_matrix(np.array([box.box]), np.stack([d.box for d in out[frame]]))[0]
            j = int(np.argmax(ious))
            if ious[j] >= iou_min:
                del out[frame][j]
                dropped.append((frame, tid))
    return out, dropped


# --- Feature-map rendering ---


def gaussian_radius(height: float, width: float, min_overlap: float = MIN_OVERLAP) -> float:
    """Largest corner shift keeping IOU >= ``min_overlap`` (three-case bound)."""
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + np.sqrt(b1**2 - 4 * c1)) / 2

    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + np.sqrt(b2**2 - 16 * c2)) / 2

    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + np.sqrt(b3**2 - 4 * a3 * c3)) / 2
    return float(min(r1, r2, r3))


def gaussian_2d(radius: int) -> np.ndarray:
    """(2r+1)² kernel with sigma = diameter / 6 and a center value of exactly 1."""
    d = 2 * radius + 1
    sigma = d / 6
    y, x = np.ogrid[-radius : radius + 1, -radius : radius + 1]
    g = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    g[g < np.finfo(g.dtype).eps * g.max()] = 0
    return g


def draw_gaussian(heatmap: np.ndarray, center: tuple[int, int], radius: int) -> None:
    """Max-combine a splat into a 2-d heatmap in place, clipped at the borders."""
    g = gaussian_2d(radius)
    x, y = center
    h, w = heatmap.shape
    left, right = min(x, radius), min(w - x, radius + 1)
    top, bottom = min(y, radius), min(h - y, radius + 1)
    region = heatmap[y - top : y + bottom, x - left : x + right]
    np.maximum(region, g[radius - top : radius + bottom, radius - left : radius + right], out=region)


@dataclass(frozen=True)
class RenderedMaps:
    fm: FeatureMap
    hm: FeatureMap
    idmap: FeatureMap
    reg: RegTarget
    idt: IdTarget

    @property
    def heat_target(self) -> HeatTarget:
        return HeatTarget(self.hm)


def _content_seed(gt_frame: list[AnnotatedBox]) -> int:
    rows = np.array([[b.frame, b.id, b.class_id, *b.box] for b in gt_frame], dtype=np.float64).reshape(-1, 7)
    return int.from_bytes(hashlib.sha256(rows.tobytes()).digest()[:8], "little")


def feature_field(gt_frame: list[AnnotatedBox], channels: int, height: int, width: int) -> FeatureMap:
    """Smooth standardized random field whose seed is a hash of the frame's boxes."""
    rng = np.random.default_rng(_content_seed(gt_frame))
    raw = gaussian_filter(rng.standard_normal((channels, height, width)), sigma=(0, 1.5, 1.5), mode="wrap")
    std = raw.std(axis=(1, 2), keepdims=True)
    return (raw / np.where(std > 0, std, 1.0)).astype(np.float32)


def render_maps(
    gt_frame: list[AnnotatedBox], layout: MapLayout, prototypes: Mapping[int, np.ndarray]
) -> RenderedMaps:
    """Render one frame's boxes into feature, heatmap and identity tensors.

    Args:
        gt_frame: Boxes of one frame.
        layout: Map geometry; the image is ``stride·W`` × ``stride·H`` pixels.
        prototypes: Unit embedding per identity, length ``layout.embed_dim``.

    Returns:
        fm (fm_channels×H×W), hm (C×H×W), idmap (embed_dim×H×W), the regression
        target and the identity target. Identity labels index the sorted ids of
        ``prototypes``.

    Raises:
        ValueError: If a box center falls outside the map or a class is out of range.
        DimensionError: If a prototype has the wrong length.
    """
    c, h, w, s = layout.num_classes, layout.height, layout.width, layout.stride
    hm = np.zeros((c, h, w), dtype=np.float32)
    idmap = np.zeros((layout.embed_dim, h, w), dtype=np.float32)
    order = sorted(prototypes)
    label_of = {tid: i for i, tid in enumerate(order)}
    centers, offsets, sizes, labels = [], [], [], []

    for b in gt_frame:
        left, top, bw, bh = b.box
        cx, cy = (left + bw / 2) / s, (top + bh / 2) / s
        x, y = int(np.floor(cx)), int(np.floor(cy))
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"box {b.box} of id {b.id} has its center outside the {h}×{w} map")
        if not 1 <= b.class_id <= c:
            raise ValueError(f"class {b.class_id} outside 1..{c}")
        proto = np.asarray(prototypes[b.id], dtype=np.float32)
        if proto.shape != (layout.embed_dim,):
            raise DimensionError(f"prototype of id {b.id} has shape {proto.shape}, need ({layout.embed_dim},)")
        radius = max(0, int(gaussian_radius(bh / s, bw / s)))
        draw_gaussian(hm[b.class_id - 1], (x, y), radius)
        idmap[:, y, x] = proto
        centers.append((y, x))
        offsets.append((cx - x, cy - y))
        sizes.append((bw / s, bh / s))
        labels.append(label_of[b.id])

    weight = np.stack([prototypes[t] for t in order]) if order else np.zeros((0, layout.embed_dim))
    return RenderedMaps(
        fm=feature_field(gt_frame, layout.fm_channels, h, w),
        hm=hm,
        idmap=idmap,
        reg=RegTarget(centers, np.array(offsets).reshape(-1, 2), np.array(sizes).reshape(-1, 2)),
        idt=IdTarget(centers, np.array(labels, dtype=np.int64), weight, np.zeros(len(order))),
    )


def sample_training_pair(gt: GroundTruth, max_interval: int = 3, rng: np.random.Generator | None = None) -> tuple[int, int]:
    """Draw two frames at most ``max_interval`` apart, the earlier one first.

    Raises:
        ValueError: If the sequence has no more than ``max_interval`` frames.
    """
    if max_interval < 1:
        raise ValueError("max_interval must be at least 1")
    frames = sorted(gt)
    if len(frames) <= max_interval:
        raise ValueError(f"need more than {max_interval} frames, got {len(frames)}")
    rng = rng or np.random.default_rng()
    delta = int(rng.integers(1, max_interval + 1))
    i = int(rng.integers(delta, len(frames)))
    return frames[i - delta], frames[i]
