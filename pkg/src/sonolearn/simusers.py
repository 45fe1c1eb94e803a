"""Simulated responders that stand in for human participants.

A ground-truth map fixes which state each sound "means" to the user and
how strongly; a simulated user answers from that map with a configurable
error rate and confidence model. Users never see the robot's true state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import ActionId, DEFAULT_STATES, ParameterGrid
from .sound import LevelMapping

CONFIDENCE_AFFINITY = "affinity"
CONFIDENCE_FIXED = "fixed"

STUCK_BASE_AFFINITY = 0.5  # lowest-bpl value; ramps up to 1.0 with bpl
OTHER_AFFINITY = 0.75


@dataclass(frozen=True)
class GroundTruthMap:
    """Per-action preferred state and association strength in [0, 1]."""

    preferred: tuple[str, ...]
    affinity: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.preferred) != len(self.affinity):
            raise ValueError("preferred and affinity must cover the same actions")
        if any(not 0.0 <= a <= 1.0 for a in self.affinity):
            raise ValueError("affinities must lie in [0, 1]")

    def preferred_state(self, action: ActionId) -> str:
        return self.preferred[action.flat]

    def affinity_for(self, action: ActionId) -> float:
        return self.affinity[action.flat]


def pitch_dominant_ground_truth(
    grid: ParameterGrid,
    level_mapping: LevelMapping,
    rng: np.random.Generator | None = None,
    *,
    states: Sequence[str] = DEFAULT_STATES,
    jitter: float = 0.0,
) -> GroundTruthMap:
    """Associations keyed on the sign of the pitch sweep.

    Falling pitch reads as Stuck (more strongly at higher bpl), rising
    pitch as Accomplished, flat pitch as Progressing. `jitter` adds
    per-action uniform noise to the affinities, modelling individual
    variation; it requires an rng.
    """
    if tuple(states) != DEFAULT_STATES:
        raise ValueError(
            f"pattern is specific to the default state set {DEFAULT_STATES}, got {tuple(states)}"
        )
    if jitter < 0:
        raise ValueError(f"jitter must be >= 0, got {jitter}")
    if jitter > 0 and rng is None:
        raise ValueError("jitter requires an rng")
    stuck, accomplished, progressing = DEFAULT_STATES
    n_bpl = len(level_mapping.bpl_levels)
    preferred: list[str] = []
    affinity: list[float] = []
    for action in grid.actions():
        bpl_idx = action.levels[1]
        pitch_value = level_mapping.pitch_levels[action.levels[2]]
        if pitch_value < 0:
            preferred.append(stuck)
            affinity.append(STUCK_BASE_AFFINITY + (1.0 - STUCK_BASE_AFFINITY) * bpl_idx / (n_bpl - 1))
        elif pitch_value > 0:
            preferred.append(accomplished)
            affinity.append(OTHER_AFFINITY)
        else:
            preferred.append(progressing)
            affinity.append(OTHER_AFFINITY)
    if jitter > 0:
        noise = rng.uniform(-jitter, jitter, size=len(affinity))
        affinity = list(np.clip(np.asarray(affinity) + noise, 0.0, 1.0))
    return GroundTruthMap(preferred=tuple(preferred), affinity=tuple(float(a) for a in affinity))


@dataclass
class SimulatedUser:
    """Noisy oracle over a ground-truth map.

    With probability error_rate the answer is a uniformly random wrong
    state; confidence is either fixed or scaled from the action's affinity.
    """

    ground_truth: GroundTruthMap
    rng: np.random.Generator
    states: tuple[str, ...] = DEFAULT_STATES
    error_rate: float = 0.0
    confidence_model: str = CONFIDENCE_AFFINITY
    fixed_confidence: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.error_rate < 1.0:
            raise ValueError(f"error_rate must be in [0, 1), got {self.error_rate}")
        if self.confidence_model not in (CONFIDENCE_AFFINITY, CONFIDENCE_FIXED):
            raise ValueError(f"unknown confidence model {self.confidence_model!r}")
        if not 0.0 <= self.fixed_confidence <= 10.0:
            raise ValueError(f"fixed confidence must be in [0, 10], got {self.fixed_confidence}")

    @classmethod
    def create(
        cls,
        ground_truth: GroundTruthMap,
        *,
        seed: int,
        states: Sequence[str] = DEFAULT_STATES,
        error_rate: float = 0.0,
        confidence_model: str = CONFIDENCE_AFFINITY,
        fixed_confidence: float = 10.0,
    ) -> "SimulatedUser":
        return cls(
            ground_truth=ground_truth,
            rng=np.random.default_rng(seed),
            states=tuple(states),
            error_rate=error_rate,
            confidence_model=confidence_model,
            fixed_confidence=fixed_confidence,
        )

    def respond(self, action: ActionId) -> tuple[str, float]:
        """Answer with the inferred state and a confidence in [0, 10]."""
        preferred = self.ground_truth.preferred_state(action)
        if self.rng.random() < self.error_rate:
            others = [s for s in self.states if s != preferred]
            s_infer = others[int(self.rng.integers(len(others)))]
        else:
            s_infer = preferred
        if self.confidence_model == CONFIDENCE_FIXED:
            confidence = self.fixed_confidence
        else:
            confidence = round(10.0 * self.ground_truth.affinity_for(action), 1)
        return s_infer, confidence
