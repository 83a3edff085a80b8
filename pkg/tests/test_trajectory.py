"""State machine, logits statistics, and the lifecycle predicates."""

import json
import random

import numpy as np
import pytest

from masktrack.assignment import MatchResult
from masktrack.masks import Box, ImageGrid, encode_mask
from masktrack.trajectory import (
    Detection,
    TrackerConfig,
    TrajectoryState,
    addition_filter,
    classify_state,
    logits_variance,
    new_trajectory,
    should_reconstruct,
    should_remove,
    update_trajectory,
)

CFG = TrackerConfig()


def full_region(width=20, height=20):
    grid = ImageGrid(width, height)
    return encode_mask(np.ones(grid.area, dtype=bool), grid)


class TestClassifyState:
    def test_published_thresholds(self):
        assert classify_state(8.5, CFG) == TrajectoryState.RELIABLE
        assert classify_state(8.0, CFG) == TrajectoryState.PENDING  # strict > for reliable
        assert classify_state(7.0, CFG) == TrajectoryState.PENDING
        assert classify_state(6.0, CFG) == TrajectoryState.SUSPICIOUS
        assert classify_state(3.0, CFG) == TrajectoryState.SUSPICIOUS
        assert classify_state(2.0, CFG) == TrajectoryState.LOST
        assert classify_state(-1.0, CFG) == TrajectoryState.LOST

    @pytest.mark.parametrize("tau,below,at,above", [
        (2.0, TrajectoryState.LOST, TrajectoryState.LOST, TrajectoryState.SUSPICIOUS),
        (6.0, TrajectoryState.SUSPICIOUS, TrajectoryState.SUSPICIOUS, TrajectoryState.PENDING),
        (8.0, TrajectoryState.PENDING, TrajectoryState.PENDING, TrajectoryState.RELIABLE),
    ])
    def test_boundary_epsilon(self, tau, below, at, above):
        eps = 1e-9
        assert classify_state(tau - eps, CFG) == below
        assert classify_state(tau, CFG) == at
        assert classify_state(tau + eps, CFG) == above

    def test_exactly_one_state_everywhere(self):
        rng = np.random.default_rng(13)
        for logits in rng.uniform(-5, 15, size=500):
            state = classify_state(float(logits), CFG)
            assert isinstance(state, TrajectoryState)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            classify_state(float("nan"), CFG)


class TestConfig:
    def test_defaults_are_published_operating_point(self):
        assert (CFG.tau_r, CFG.tau_p, CFG.tau_s) == (8.0, 6.0, 2.0)
        assert CFG.tolerance_frames == 25
        assert CFG.r_threshold == 0.5
        assert CFG.variance_window == 10
        assert CFG.miou_occlusion_threshold == 0.8

    def test_threshold_order_enforced(self):
        with pytest.raises(ValueError):
            TrackerConfig(tau_r=5.0, tau_p=6.0)

    def test_json_roundtrip(self):
        cfg = TrackerConfig(det_conf_threshold=0.35, emit_min_state=TrajectoryState.SUSPICIOUS)
        again = TrackerConfig.from_json(cfg.to_json())
        assert again == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            TrackerConfig.from_dict({"tau_r": 8.0, "bogus": 1})

    def test_partial_dict_uses_defaults(self):
        cfg = TrackerConfig.from_dict({"det_conf_threshold": 0.3})
        assert cfg.det_conf_threshold == 0.3
        assert cfg.tau_r == 8.0


class TestLogitsVariance:
    def test_constant_history(self):
        assert logits_variance([5.0] * 10, 10) == 0.0

    def test_one_to_ten(self):
        # direct summation: mean 5.5, sum of squared deviations 82.5, /10
        assert logits_variance(list(range(1, 11)), 10) == pytest.approx(8.25, abs=1e-12)

    def test_short_history_uses_available(self):
        assert logits_variance([2.0, 4.0], 10) == pytest.approx(1.0, abs=1e-12)

    def test_window_takes_most_recent(self):
        history = [100.0] * 5 + [3.0] * 10
        assert logits_variance(history, 10) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            logits_variance([], 10)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            n = int(rng.integers(1, 15))
            values = rng.uniform(0, 9, size=n).tolist()
            window = values[-10:]
            mean = sum(window) / len(window)
            expected = sum((v - mean) ** 2 for v in window) / len(window)
            assert logits_variance(values, 10) == pytest.approx(expected, abs=1e-12)


class TestUpdateTrajectory:
    def grid_mask(self):
        grid = ImageGrid(8, 8)
        bitmap = np.zeros((8, 8), dtype=bool)
        bitmap[2:5, 2:5] = True
        return encode_mask(bitmap, grid)

    def test_drop_to_lost(self):
        traj = new_trajectory(1, Box(2, 2, 3, 3), frame=1)
        update_trajectory(traj, self.grid_mask(), 1.0, 2, CFG)
        assert traj.state == TrajectoryState.LOST
        assert traj.frames_lost == 1

    def test_recovery_resets_counter(self):
        traj = new_trajectory(1, Box(2, 2, 3, 3), frame=1)
        for frame in range(2, 5):
            update_trajectory(traj, self.grid_mask(), 1.0, frame, CFG)
        assert traj.frames_lost == 3
        update_trajectory(traj, self.grid_mask(), 9.0, 5, CFG)
        assert traj.state == TrajectoryState.RELIABLE
        assert traj.frames_lost == 0

    def test_counter_accumulates(self):
        traj = new_trajectory(1, Box(2, 2, 3, 3), frame=1)
        for frame in range(2, 32):
            update_trajectory(traj, self.grid_mask(), 1.0, frame, CFG)
        assert traj.frames_lost == 30

    def test_box_refreshed_from_mask(self):
        traj = new_trajectory(1, Box(0, 0, 1, 1), frame=1)
        update_trajectory(traj, self.grid_mask(), 9.0, 2, CFG)
        assert traj.last_box == Box(2, 2, 3, 3)

    def test_empty_mask_clears_box(self):
        grid = ImageGrid(8, 8)
        empty = encode_mask(np.zeros(64, dtype=bool), grid)
        traj = new_trajectory(1, Box(0, 0, 1, 1), frame=1)
        update_trajectory(traj, empty, 9.0, 2, CFG)
        assert traj.last_box is None

    def test_history_bounded(self):
        traj = new_trajectory(1, Box(0, 0, 1, 1), frame=1)
        for frame in range(2, 40):
            update_trajectory(traj, self.grid_mask(), 9.0, frame, CFG)
        assert len(traj.logits_history) == CFG.variance_window

    def test_fuzz_lost_counter_invariant(self):
        rng = random.Random(42)
        traj = new_trajectory(1, Box(0, 0, 1, 1), frame=1)
        for frame in range(2, 500):
            update_trajectory(traj, self.grid_mask(), rng.uniform(-1, 10), frame, CFG)
            if traj.state == TrajectoryState.LOST:
                assert traj.frames_lost > 0
            else:
                assert traj.frames_lost == 0
            assert traj.state == classify_state(traj.logits_history[-1], CFG)


class TestShouldRemove:
    def make_lost(self, frames_lost):
        traj = new_trajectory(1, Box(0, 0, 1, 1), frame=1)
        traj.state = TrajectoryState.LOST
        traj.frames_lost = frames_lost
        return traj

    def test_at_tolerance_kept(self):
        assert not should_remove(self.make_lost(25), CFG)

    def test_beyond_tolerance_removed(self):
        assert should_remove(self.make_lost(26), CFG)

    def test_other_states_never_removed(self):
        traj = self.make_lost(100)
        traj.state = TrajectoryState.PENDING
        traj.frames_lost = 0
        assert not should_remove(traj, CFG)

    def test_monotone_once_true(self):
        grid = ImageGrid(4, 4)
        empty = encode_mask(np.zeros(16, dtype=bool), grid)
        traj = self.make_lost(26)
        assert should_remove(traj, CFG)
        for frame in range(2, 20):
            update_trajectory(traj, empty, 0.0, frame, CFG)
            assert should_remove(traj, CFG)


class TestAdditionFilter:
    def test_low_confidence_excluded(self):
        dets = [Detection(Box(0, 0, 5, 5), 0.3)]
        match = MatchResult(unmatched_detections=[0])
        assert addition_filter(dets, match, full_region(), CFG) == []

    def test_unmatched_inside_region_accepted(self):
        dets = [Detection(Box(0, 0, 5, 5), 0.9)]
        match = MatchResult(unmatched_detections=[0])
        assert addition_filter(dets, match, full_region(), CFG) == dets

    def test_matched_detection_not_considered(self):
        dets = [Detection(Box(0, 0, 5, 5), 0.9)]
        match = MatchResult(matches=[(0, 0)], unmatched_detections=[])
        assert addition_filter(dets, match, full_region(), CFG) == []

    def test_overlap_at_40_percent_rejected(self):
        grid = ImageGrid(20, 10)
        bitmap = np.zeros((10, 20), dtype=bool)
        bitmap[:, :4] = True  # 4 of the box's 10 columns
        region = encode_mask(bitmap, grid)
        dets = [Detection(Box(0, 0, 10, 10), 0.9)]
        match = MatchResult(unmatched_detections=[0])
        assert addition_filter(dets, match, region, CFG) == []

    def test_output_subset_and_all_stages_hold(self):
        rng = random.Random(9)
        grid = ImageGrid(30, 30)
        bitmap = np.zeros((30, 30), dtype=bool)
        bitmap[:, :15] = True
        region = encode_mask(bitmap, grid)
        dets = [
            Detection(
                Box(rng.randint(0, 20), rng.randint(0, 20), rng.randint(2, 8),
                    rng.randint(2, 8)),
                rng.random(),
            )
            for _ in range(20)
        ]
        match = MatchResult(unmatched_detections=list(range(0, 20, 2)))
        from masktrack.masks import box_region_overlap
        accepted = addition_filter(dets, match, region, CFG)
        for det in accepted:
            assert det in dets
            assert det.confidence > CFG.det_conf_threshold
            assert dets.index(det) in match.unmatched_detections
            assert box_region_overlap(det.box, region) > CFG.r_threshold


class TestShouldReconstruct:
    def pending(self):
        traj = new_trajectory(1, Box(0, 0, 2, 2), frame=1)
        traj.state = TrajectoryState.PENDING
        return traj

    def test_pending_with_confident_match(self):
        assert should_reconstruct(self.pending(), Detection(Box(0, 0, 2, 2), 0.9), CFG)

    def test_reliable_never(self):
        traj = self.pending()
        traj.state = TrajectoryState.RELIABLE
        assert not should_reconstruct(traj, Detection(Box(0, 0, 2, 2), 0.9), CFG)

    def test_no_match_never(self):
        assert not should_reconstruct(self.pending(), None, CFG)

    def test_weak_match_never(self):
        assert not should_reconstruct(self.pending(), Detection(Box(0, 0, 2, 2), 0.4), CFG)
