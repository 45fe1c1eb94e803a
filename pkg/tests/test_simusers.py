from __future__ import annotations

import numpy as np
import pytest

from sonolearn.grid import DEFAULT_STATES, ParameterGrid, decode_action
from sonolearn.simusers import (
    GroundTruthMap,
    SimulatedUser,
    pitch_dominant_ground_truth,
)
from sonolearn.sound import LevelMapping

MAPPING = LevelMapping()


class TestPitchDominantGroundTruth:
    def test_pitch_sign_drives_state(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        for action in acoustic_grid.actions():
            pitch = MAPPING.pitch_levels[action.levels[2]]
            expected = (
                "Stuck" if pitch < 0 else "Accomplished" if pitch > 0 else "Progressing"
            )
            assert gt.preferred_state(action) == expected

    def test_nine_actions_per_state(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        counts = {s: gt.preferred.count(s) for s in DEFAULT_STATES}
        assert counts == {s: 9 for s in DEFAULT_STATES}

    def test_stuck_affinity_grows_with_bpl(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        stuck_affinities = {}
        for action in acoustic_grid.actions():
            if gt.preferred_state(action) == "Stuck":
                stuck_affinities.setdefault(action.levels[1], set()).add(
                    gt.affinity_for(action)
                )
        levels = sorted(stuck_affinities)
        values = [max(stuck_affinities[i]) for i in levels]
        assert values == sorted(values)
        assert values[0] < values[-1]

    def test_non_default_states_rejected(self, acoustic_grid):
        with pytest.raises(ValueError, match="default state set"):
            pitch_dominant_ground_truth(
                acoustic_grid, MAPPING, states=("Idle", "Busy")
            )

    def test_jitter_requires_rng(self, acoustic_grid):
        with pytest.raises(ValueError, match="rng"):
            pitch_dominant_ground_truth(acoustic_grid, MAPPING, jitter=0.1)

    def test_jitter_keeps_affinity_bounded(self, acoustic_grid):
        rng = np.random.default_rng(3)
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING, rng, jitter=0.3)
        assert all(0.0 <= a <= 1.0 for a in gt.affinity)


class TestGroundTruthMap:
    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError, match="same actions"):
            GroundTruthMap(preferred=("A", "B"), affinity=(0.5,))

    def test_affinity_bounds_enforced(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            GroundTruthMap(preferred=("A",), affinity=(1.5,))


class TestSimulatedUser:
    def test_noiseless_oracle(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        user = SimulatedUser.create(
            gt, seed=0, error_rate=0.0, confidence_model="fixed", fixed_confidence=10.0
        )
        for action in acoustic_grid.actions():
            s_infer, confidence = user.respond(action)
            assert s_infer == gt.preferred_state(action)
            assert confidence == 10.0

    def test_error_rate_frequency(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        user = SimulatedUser.create(gt, seed=123, error_rate=0.3)
        action = decode_action(0, acoustic_grid)
        wrong = sum(
            user.respond(action)[0] != gt.preferred_state(action)
            for _ in range(10_000)
        )
        assert wrong / 10_000 == pytest.approx(0.30, abs=0.02)

    def test_affinity_confidence_scaling(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        user = SimulatedUser.create(gt, seed=5)
        for action in acoustic_grid.actions():
            _, confidence = user.respond(action)
            assert confidence == round(10.0 * gt.affinity_for(action), 1)

    def test_affinity_three_quarters_maps_to_seven_point_five(self):
        gt = GroundTruthMap(preferred=("Stuck", "Stuck"), affinity=(0.75, 0.75))
        user = SimulatedUser.create(gt, seed=9, error_rate=0.0)
        action = decode_action(0, ParameterGrid.from_levels([("p", [0, 1])]))
        _, confidence = user.respond(action)
        assert confidence == 7.5

    def test_same_seed_same_responses(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        actions = list(acoustic_grid.actions()) * 5
        a = SimulatedUser.create(gt, seed=77, error_rate=0.4)
        b = SimulatedUser.create(gt, seed=77, error_rate=0.4)
        assert [a.respond(x) for x in actions] == [b.respond(x) for x in actions]

    def test_wrong_answers_stay_inside_state_set(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        user = SimulatedUser.create(gt, seed=2, error_rate=0.9)
        action = decode_action(0, acoustic_grid)
        for _ in range(200):
            s_infer, _ = user.respond(action)
            assert s_infer in DEFAULT_STATES

    def test_invalid_error_rate_rejected(self, acoustic_grid):
        gt = pitch_dominant_ground_truth(acoustic_grid, MAPPING)
        with pytest.raises(ValueError):
            SimulatedUser.create(gt, seed=1, error_rate=1.0)
