import numpy as np
import pytest

from schemas import CorruptionConfig, SceneConfig, TrackerConfig
from tracking.metrics import clear_mot
from tracking.records import AnnotatedBox, Detection
from tracking.synth import corrupt, generate_scene, gt_ids, make_prototypes
from tracking.tracker import MatchStage, Track, Tracker, TrackStatus, run_sequence

BOX = (10.0, 10.0, 10.0, 20.0)
E1 = (1.0, 0.0, 0.0, 0.0)
E2 = (0.0, 1.0, 0.0, 0.0)


def _det(box=BOX, score=0.9, cls=1, emb=E1) -> Detection:
    return Detection(np.array(box), score, cls, np.array(emb))


def _confirmed(**overrides) -> Tracker:
    """Tracker holding one Active track (id 1) at BOX."""
    tracker = Tracker(TrackerConfig(min_hits=1, **overrides))
    tracker.associate_step([_det()])
    return tracker


class TestLifecycle:
    def test_new_track_is_tentative_and_unreported(self):
        tracker = Tracker()
        result = tracker.associate_step([_det()])
        assert result.new_tracks == [1]
        assert tracker.tracks[0].status is TrackStatus.TENTATIVE
        assert tracker.reported(result, 1) == []

    def test_second_hit_confirms(self):
        tracker = Tracker()
        tracker.associate_step([_det()])
        result = tracker.associate_step([_det()])
        assert result.stage_of(0) is MatchStage.APPEARANCE
        assert result.matches[0].cost == pytest.approx(0.0, abs=1e-9)
        out = tracker.reported(result, 2)
        assert [b.id for b in out] == [1]
        np.testing.assert_allclose(out[0].box, BOX, atol=1e-6)

    def test_min_hits_one_reports_immediately(self):
        tracker = Tracker(TrackerConfig(min_hits=1))
        result = tracker.associate_step([_det()])
        assert [b.id for b in tracker.reported(result, 1)] == [1]

    def test_unmatched_tentative_removed(self):
        tracker = Tracker()
        tracker.associate_step([_det()])
        result = tracker.associate_step([])
        assert result.removed == [1]
        assert tracker.tracks == []

    def test_staleness_thirty_survives_thirty_one_removed(self):
        tracker = _confirmed()
        for _ in range(30):
            result = tracker.associate_step([])
        assert [t.track_id for t in tracker.tracks] == [1]
        assert tracker.tracks[0].frames_since_update == 30
        assert tracker.tracks[0].status is TrackStatus.LOST
        assert result.removed == []
        assert tracker.associate_step([]).removed == [1]

    def test_lost_track_reactivates_with_same_id(self):
        tracker = _confirmed()
        assert tracker.associate_step([]).lost == [1]
        result = tracker.associate_step([_det()])
        assert tracker.tracks[0].status is TrackStatus.ACTIVE
        assert [b.id for b in tracker.reported(result, 3)] == [1]

    def test_ids_never_reused(self):
        tracker = _confirmed(max_lost=1)
        tracker.associate_step([])
        assert tracker.associate_step([]).removed == [1]
        assert tracker.associate_step([_det()]).new_tracks == [2]

    def test_resume_continues_ids(self):
        tracker = Tracker(TrackerConfig(min_hits=1), tracks=[Track.start(7, _det(), 1)])
        result = tracker.associate_step([_det(), _det(box=(60.0, 60.0, 10.0, 20.0), emb=E2)])
        assert result.new_tracks == [8]

    def test_embedding_is_smoothed_and_unit(self):
        tracker = _confirmed()
        tracker.associate_step([_det(emb=(0.8, 0.6, 0.0, 0.0))])
        want = np.array([0.98, 0.06, 0.0, 0.0]) / np.hypot(0.98, 0.06)
        np.testing.assert_allclose(tracker.tracks[0].embedding, want, rtol=1e-9)


class TestCascade:
    def test_low_score_without_tracks_is_discarded(self):
        tracker = Tracker()
        result = tracker.associate_step([_det(score=0.39)])
        assert tracker.tracks == []
        assert result.discarded == [0]

    def test_very_low_score_still_recovers_by_default(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(score=0.05)])
        assert result.stage_of(0) is MatchStage.LOW_CONFIDENCE
        assert result.discarded == []
        assert result.lost == []

    def test_below_configured_floor_is_discarded(self):
        tracker = _confirmed(low_score_min=0.1)
        result = tracker.associate_step([_det(score=0.05), _det(box=(200, 200, 10, 20), score=0.02)])
        assert result.matches == []
        assert result.discarded == [0, 1]
        assert result.lost == [1]

    def test_low_confidence_recovery(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(score=0.2)])
        assert result.stage_of(0) is MatchStage.LOW_CONFIDENCE
        assert tracker.reported(result, 2)[0].conf == pytest.approx(0.2)

    def test_low_confidence_recovers_tentative_track(self):
        tracker = Tracker()
        tracker.associate_step([_det()])
        result = tracker.associate_step([_det(score=0.2)])
        assert result.stage_of(0) is MatchStage.LOW_CONFIDENCE
        assert tracker.tracks[0].status is TrackStatus.ACTIVE

    def test_high_confidence_match_not_left_to_stage_three(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(score=0.9), _det(score=0.2)])
        assert result.stage_of(0) is MatchStage.APPEARANCE
        assert result.stage_of(1) is None
        assert result.discarded == [1]

    def test_iou_fallback_for_appearance_change(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(emb=E2)])
        assert result.stage_of(0) is MatchStage.IOU
        assert result.new_tracks == []

    def test_class_mismatch_never_matched(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(cls=2)])
        assert result.matches == []
        assert result.new_tracks == [2]
        assert result.lost == [1]

    def test_class_agnostic_mode(self):
        tracker = _confirmed(class_aware=False)
        assert tracker.associate_step([_det(cls=2)]).stage_of(0) is MatchStage.APPEARANCE

    def test_far_detection_outside_gate(self):
        tracker = _confirmed(iou_threshold_high=0.5)
        result = tracker.associate_step([_det(box=(40.0, 10.0, 10.0, 20.0))])
        assert result.matches == []
        assert result.new_tracks == [2]

    def test_one_detection_per_track(self):
        tracker = _confirmed()
        result = tracker.associate_step([_det(), _det()])
        assert len(result.matches) == 1
        assert result.new_tracks == [2]

    def test_new_track_needs_min_score(self):
        tracker = Tracker(TrackerConfig(min_score_new=0.6))
        result = tracker.associate_step([_det(score=0.5)])
        assert tracker.tracks == []
        assert result.discarded == [0]

    def test_motion_blend_still_matches(self):
        tracker = _confirmed(motion_weight=0.5)
        result = tracker.associate_step([_det(box=(10.5, 10.0, 10.0, 20.0))])
        assert result.stage_of(0) is MatchStage.APPEARANCE
        assert result.matches[0].cost > 0.0


class TestRunSequence:
    def test_persistent_detection_single_id(self):
        out = run_sequence([[_det()] for _ in range(100)])
        assert len(out) == 100
        assert out[1] == []
        assert {b.id for boxes in out.values() for b in boxes} == {1}
        assert all(len(out[f]) == 1 for f in range(2, 101))

    def test_empty_sequence(self):
        assert run_sequence([]) == {}

    def test_mapping_keeps_frame_numbers(self):
        out = run_sequence({3: [_det()], 1: [_det()], 2: []}, TrackerConfig(min_hits=1))
        assert list(out) == [1, 2, 3]
        assert [b.id for b in out[3]] == [1]

    def test_two_targets_no_identity_switch(self):
        gt = {
            f: [
                AnnotatedBox(f, 1, (5.0 + f, 5.0, 10.0, 20.0)),
                AnnotatedBox(f, 2, (5.0 + f, 50.0, 10.0, 20.0)),
            ]
            for f in range(1, 31)
        }
        dets = {f: [_det(b.box, emb=E1 if b.id == 1 else E2) for b in gt[f]] for f in gt}
        counts = clear_mot(gt, run_sequence(dets))
        assert counts.ids == 0
        assert counts.fp == 0
        assert counts.fn == 2

    def test_deterministic(self):
        scene = SceneConfig(num_frames=30, seed=3)
        gt = generate_scene(scene)
        cfg = CorruptionConfig(embed_dim=16, seed=4)
        dets = corrupt(gt, cfg, make_prototypes(gt_ids(gt), 16, seed=5))
        assert run_sequence(dets) == run_sequence(dets)
