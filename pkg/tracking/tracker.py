"""Online association: confidence split, Kalman prediction, a three-stage
matching cascade and the track lifecycle.

Stage 1 matches high-confidence detections to every retained track by
appearance (cosine distance) inside the Mahalanobis gate. Stage 2 retries the
leftovers by IOU. Stage 3 gives low-confidence detections a chance against
every track that is still unmatched; whatever low-confidence detection
is left over is dropped.
"""

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        def __str__(self) -> str:
            return str(self.value)

        def __format__(self, format_spec: str) -> str:
            return str(self.value).__format__(format_spec)

import numpy as np

from logger_config import tracking_logger
from schemas import TrackerConfig
from tracking.kalman import KalmanState, gating_distances, kf_initiate, kf_predict, kf_update
from tracking.matching import FORBIDDEN, cosine_distance_matrix, gated_matches, iou_matrix
from tracking.records import AnnotatedBox, Detection, DetectionFrames, TrajectorySet


class TrackStatus(StrEnum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"


class MatchStage(StrEnum):
    APPEARANCE = "appearance"
    IOU = "iou"
    LOW_CONFIDENCE = "low_confidence"


@dataclass
class Track:
    """A trajectory hypothesis owned by one tracker."""

    track_id: int
    kstate: KalmanState
    embedding: np.ndarray
    class_id: int
    status: TrackStatus = TrackStatus.TENTATIVE
    frames_since_update: int = 0
    hits: int = 1
    score: float = 0.0

    @classmethod
    def start(cls, track_id: int, det: Detection, min_hits: int) -> "Track":
        status = TrackStatus.ACTIVE if min_hits <= 1 else TrackStatus.TENTATIVE
        return cls(track_id, kf_initiate(det.box), det.embedding.copy(), det.class_id, status, score=det.score)

    @property
    def box(self) -> np.ndarray:
        return self.kstate.tlwh

    def predict(self) -> None:
        self.kstate = kf_predict(self.kstate)

    def mark_hit(self, det: Detection, config: TrackerConfig) -> None:
        self.kstate = kf_update(self.kstate, det.box)
        emb = config.ema_alpha * self.embedding + (1.0 - config.ema_alpha) * det.embedding
        norm = np.linalg.norm(emb)
        self.embedding = emb / norm if norm > 1e-12 else det.embedding.copy()
        self.frames_since_update = 0
        self.hits += 1
        self.score = det.score
        if self.status is TrackStatus.LOST or self.hits >= config.min_hits:
            self.status = TrackStatus.ACTIVE

    def mark_missed(self) -> None:
        self.frames_since_update += 1
        if self.status is TrackStatus.ACTIVE:
            self.status = TrackStatus.LOST


@dataclass(frozen=True)
class Match:
    track_id: int
    det_index: int
    stage: MatchStage
    cost: float


@dataclass
class StepResult:
    """What one frame of association did, by track id and detection index."""

    matches: list[Match] = field(default_factory=list)
    new_tracks: list[int] = field(default_factory=list)
    lost: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    discarded: list[int] = field(default_factory=list)

    def stage_of(self, det_index: int) -> MatchStage | None:
        return next((m.stage for m in self.matches if m.det_index == det_index), None)


def _class_mask(tracks: Sequence[Track], dets: Sequence[Detection]) -> np.ndarray:
    t = np.array([tr.class_id for tr in tracks])[:, None]
    d = np.array([det.class_id for det in dets])[None, :]
    return t != d


def _appearance_cost(tracks: Sequence[Track], dets: Sequence[Detection], config: TrackerConfig) -> np.ndarray:
    cost = cosine_distance_matrix(
        np.stack([t.embedding for t in tracks]), np.stack([d.embedding for d in dets])
    )
    boxes = np.stack([d.box for d in dets])
    d2 = np.stack([gating_distances(t.kstate, boxes) for t in tracks])
    if config.motion_weight > 0.0:
        cost = (1.0 - config.motion_weight) * cost + config.motion_weight * d2 / config.gate
    cost[d2 > config.gate] = FORBIDDEN
    if config.class_aware:
        cost[_class_mask(tracks, dets)] = FORBIDDEN
    return cost


def _iou_cost(tracks: Sequence[Track], dets: Sequence[Detection], config: TrackerConfig) -> np.ndarray:
    cost = 1.0 - iou_matrix(np.stack([t.box for t in tracks]), np.stack([d.box for d in dets]))
    if config.class_aware:
        cost[_class_mask(tracks, dets)] = FORBIDDEN
    return cost


class Tracker:
    """Single-writer online tracker for one sequence.

    Args:
        config: Association settings.
        tracks: Optional tracks to resume from; new ids continue above theirs.
    """

    def __init__(self, config: TrackerConfig | None = None, tracks: Iterable[Track] | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = list(tracks or [])
        self._next_id = max((t.track_id for t in self.tracks), default=0) + 1

    def _run_stage(
        self,
        stage: MatchStage,
        track_idx: list[int],
        det_idx: list[int],
        detections: Sequence[Detection],
        threshold: float,
        result: StepResult,
    ) -> tuple[list[int], list[int]]:
        """Match a subset of tracks to a subset of detections, returning the leftovers."""
        if not track_idx or not det_idx:
            return track_idx, det_idx
        tracks = [self.tracks[i] for i in track_idx]
        dets = [detections[j] for j in det_idx]
        cost_fn = _appearance_cost if stage is MatchStage.APPEARANCE else _iou_cost
        cost = cost_fn(tracks, dets, self.config)
        matches, rows, cols = gated_matches(cost, threshold)
        for r, c in matches:
            track, j = tracks[r], det_idx[c]
            track.mark_hit(detections[j], self.config)
            result.matches.append(Match(track.track_id, j, stage, float(cost[r, c])))
        return [track_idx[r] for r in rows], [det_idx[c] for c in cols]

    def associate_step(self, detections: Sequence[Detection]) -> StepResult:
        """Advance every track one frame and associate this frame's detections.

        Args:
            detections: Detections of a single frame.

        Returns:
            Matches (with the stage that made them), new, lost and removed ids,
            plus the indices of discarded low-confidence detections.

        Raises:
            NumericError: If a Kalman innovation covariance is not positive definite.
        """
        cfg = self.config
        result = StepResult()
        for track in self.tracks:
            track.predict()

        high = [j for j, d in enumerate(detections) if d.score >= cfg.tau]
        low = [j for j, d in enumerate(detections) if cfg.low_score_min <= d.score < cfg.tau]
        pending = list(range(len(self.tracks)))

        pending, high = self._run_stage(
            MatchStage.APPEARANCE, pending, high, detections, cfg.appearance_match_threshold, result
        )
        pending, high = self._run_stage(
            MatchStage.IOU, pending, high, detections, 1.0 - cfg.iou_threshold_high, result
        )
        unmatched, low = self._run_stage(
            MatchStage.LOW_CONFIDENCE, pending, low, detections, 1.0 - cfg.iou_threshold_low, result
        )
        result.discarded = low + [j for j, d in enumerate(detections) if d.score < cfg.low_score_min]

        keep = np.ones(len(self.tracks), dtype=bool)
        for i in unmatched:
            track = self.tracks[i]
            was_active = track.status is TrackStatus.ACTIVE
            track.mark_missed()
            if track.status is TrackStatus.TENTATIVE or track.frames_since_update > cfg.max_lost:
                keep[i] = False
                result.removed.append(track.track_id)
            elif was_active:
                result.lost.append(track.track_id)
        self.tracks = [t for t, k in zip(self.tracks, keep) if k]

        for j in high:
            det = detections[j]
            if det.score < cfg.min_score_new:
                result.discarded.append(j)
                continue
            track = Track.start(self._next_id, det, cfg.min_hits)
            self._next_id += 1
            self.tracks.append(track)
            result.new_tracks.append(track.track_id)
        result.discarded.sort()

        tracking_logger.debug(
            "step: %d dets, %d matched, %d new, %d lost, %d removed",
            len(detections), len(result.matches), len(result.new_tracks), len(result.lost), len(result.removed),
        )
        return result

    def reported(self, result: StepResult, frame: int) -> list[AnnotatedBox]:
        """Boxes of Active tracks that were matched or started in ``result``."""
        touched = {m.track_id for m in result.matches} | set(result.new_tracks)
        return [
            AnnotatedBox(frame, t.track_id, tuple(t.box), t.class_id, t.score, 1.0)
            for t in self.tracks
            if t.status is TrackStatus.ACTIVE and t.track_id in touched
        ]


def associate_step(tracker: Tracker, detections: Sequence[Detection]) -> StepResult:
    """Functional alias for :meth:`Tracker.associate_step`."""
    return tracker.associate_step(detections)


def run_sequence(
    frames: Sequence[Sequence[Detection]] | DetectionFrames, config: TrackerConfig | None = None
) -> TrajectorySet:
    """Track a whole sequence with a fresh tracker.

    Args:
        frames: Either a list of per-frame detection lists (frame numbers start
            at 1) or a mapping frame -> detections.
        config: Association settings.

    Returns:
        Frame -> Active tracks updated in that frame. Track ids are never reused.
    """
    if isinstance(frames, Mapping):
        items = sorted(frames.items())
    else:
        items = list(enumerate(frames, start=1))
    tracker = Tracker(config)
    out: TrajectorySet = {}
    total_new = total_removed = 0
    for frame, dets in items:
        result = tracker.associate_step(list(dets))
        total_new += len(result.new_tracks)
        total_removed += len(result.removed)
        out[frame] = tracker.reported(result, frame)
    tracking_logger.info(
        "sequence done: %d frames, %d tracks started, %d removed, %d retained",
        len(items), total_new, total_removed, len(tracker.tracks),
    )
    return out
