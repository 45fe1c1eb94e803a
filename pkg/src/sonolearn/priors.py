"""Prior value tables: JSON file round-trip and pattern builders."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .bandit import Hyperparameters
from .grid import DEFAULT_STATES, ParameterGrid
from .simusers import GroundTruthMap, pitch_dominant_ground_truth
from .sound import LevelMapping


def validate_priors(
    priors: Mapping[str, Sequence[float]],
    grid: ParameterGrid,
    states: Sequence[str],
    hp: Hyperparameters,
) -> dict[str, np.ndarray]:
    """Check completeness, length, and value bounds; return float arrays."""
    missing = [s for s in states if s not in priors]
    if missing:
        raise ValueError(f"priors missing for states: {missing}")
    out: dict[str, np.ndarray] = {}
    for state in states:
        values = np.asarray(priors[state], dtype=np.float64)
        if values.shape != (grid.action_count,):
            raise ValueError(
                f"priors for state {state!r} must have {grid.action_count} values, "
                f"got {values.size}"
            )
        bad = np.flatnonzero((values < hp.q_min) | (values > hp.q_max))
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"prior {values[i]} for state {state!r} action {i} outside "
                f"[{hp.q_min}, {hp.q_max}]"
            )
        out[state] = values
    return out


def save_priors(path: str | Path, priors: Mapping[str, Sequence[float]]) -> None:
    payload = {state: [float(v) for v in values] for state, values in priors.items()}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_priors(
    path: str | Path,
    grid: ParameterGrid,
    states: Sequence[str],
    hp: Hyperparameters,
) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"prior file not found: {path}")
    data = json.loads(path.read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: prior file must map state names to value arrays")
    return validate_priors(data, grid, states, hp)


def priors_from_ground_truth(
    ground_truth: GroundTruthMap,
    states: Sequence[str],
    *,
    scale: float = 10.0,
) -> dict[str, list[float]]:
    """Turn an association map into per-state priors.

    Each action starts at +scale*affinity in its preferred state's table
    and -scale*affinity everywhere else, i.e. the reward one would expect
    from a responder who shares the map.
    """
    priors: dict[str, list[float]] = {}
    for state in states:
        priors[state] = [
            scale * a if p == state else -scale * a
            for p, a in zip(ground_truth.preferred, ground_truth.affinity)
        ]
    return priors


def pitch_dominant_priors(
    grid: ParameterGrid,
    level_mapping: LevelMapping,
    states: Sequence[str] = DEFAULT_STATES,
    *,
    scale: float = 10.0,
) -> dict[str, list[float]]:
    """Default informed start: values follow the pitch-sign association."""
    reference = pitch_dominant_ground_truth(grid, level_mapping, states=states)
    return priors_from_ground_truth(reference, states, scale=scale)
