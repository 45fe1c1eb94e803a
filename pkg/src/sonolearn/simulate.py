"""Seeded cohort simulation: each simulated user teaches paired learners.

Every user runs both initialization modes against the same ground-truth
map (within-subject), in the order given by their condition. All
randomness derives from the master seed, so outputs are byte-identical
across re-runs.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .analysis import (
    COHORT_FILE,
    CohortResult,
    MODE_INFORMED,
    MODE_UNINFORMED,
    RunRecord,
)
from .bandit import (
    STATUS_CONVERGED,
    STATUS_RUNNING,
    Hyperparameters,
    LearnerSession,
    SCHEDULE_UNIFORM,
    SCHEDULES,
)
from .eventlog import LogWriter, event_record, learner_header
from .grid import DEFAULT_STATES
from .priors import priors_from_ground_truth, validate_priors
from .simusers import (
    CONFIDENCE_AFFINITY,
    CONFIDENCE_FIXED,
    SimulatedUser,
    pitch_dominant_ground_truth,
)
from .sound import LevelMapping

CONDITION_CHOICES = ("UI", "IU", "alternate")


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for a simulated cohort (all JSON-serializable)."""

    cohort: int = 24
    seed: int = 20240601
    error_rate: float = 0.1
    confidence_model: str = CONFIDENCE_AFFINITY
    fixed_confidence: float = 10.0
    affinity_jitter: float = 0.05
    conditions: str = "alternate"  # "UI", "IU", or alternate per run
    schedule: str = SCHEDULE_UNIFORM
    init_modes: tuple[str, ...] = (MODE_UNINFORMED, MODE_INFORMED)
    prior_scale: float = 10.0
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    level_mapping: LevelMapping = field(default_factory=LevelMapping)
    states: tuple[str, ...] = DEFAULT_STATES

    def __post_init__(self) -> None:
        problems = []
        if self.cohort < 1:
            problems.append(f"cohort must be >= 1, got {self.cohort}")
        if not 0.0 <= self.error_rate < 1.0:
            problems.append(f"error_rate must be in [0, 1), got {self.error_rate}")
        if self.confidence_model not in (CONFIDENCE_AFFINITY, CONFIDENCE_FIXED):
            problems.append(f"unknown confidence_model {self.confidence_model!r}")
        if self.conditions not in CONDITION_CHOICES:
            problems.append(f"conditions must be one of {CONDITION_CHOICES}")
        if self.schedule not in SCHEDULES:
            problems.append(f"schedule must be one of {SCHEDULES}")
        unknown_modes = set(self.init_modes) - {MODE_UNINFORMED, MODE_INFORMED}
        if not self.init_modes or unknown_modes:
            problems.append(f"init_modes must be drawn from {(MODE_UNINFORMED, MODE_INFORMED)}")
        if not 0 < self.prior_scale <= abs(self.hp.q_max):
            problems.append(f"prior_scale must be in (0, {abs(self.hp.q_max)}]")
        if problems:
            raise ValueError("invalid simulation config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "cohort": self.cohort,
            "seed": self.seed,
            "error_rate": self.error_rate,
            "confidence_model": self.confidence_model,
            "fixed_confidence": self.fixed_confidence,
            "affinity_jitter": self.affinity_jitter,
            "conditions": self.conditions,
            "schedule": self.schedule,
            "init_modes": list(self.init_modes),
            "prior_scale": self.prior_scale,
            "hp": self.hp.to_dict(),
            "level_mapping": self.level_mapping.to_dict(),
            "states": list(self.states),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SimulationConfig":
        kwargs: dict = dict(obj)
        unknown = set(kwargs) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown simulation config fields: {sorted(unknown)}")
        if "hp" in kwargs:
            kwargs["hp"] = Hyperparameters.from_dict(kwargs["hp"])
        if "level_mapping" in kwargs:
            kwargs["level_mapping"] = LevelMapping.from_dict(kwargs["level_mapping"])
        for key in ("init_modes", "states"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def run_learning_session(
    user: SimulatedUser,
    session: LearnerSession,
    *,
    log_path: Path | None = None,
) -> LearnerSession:
    """Drive a learner to completion against a simulated user."""
    writer = None
    if log_path is not None:
        log_path.unlink(missing_ok=True)
        writer = LogWriter(log_path)
        writer.append(learner_header(session))
    while session.status == STATUS_RUNNING:
        _, action = session.next_trial()
        s_infer, confidence = user.respond(action)
        event = session.make_feedback(s_infer, confidence)
        session.apply_feedback(event)
        if writer is not None:
            writer.append(event_record(event))
    return session


def _condition_for(config: SimulationConfig, run_index: int) -> str:
    if config.conditions == "alternate":
        return "UI" if run_index % 2 == 0 else "IU"
    return config.conditions


def _mode_order(condition: str) -> tuple[str, ...]:
    return (
        (MODE_UNINFORMED, MODE_INFORMED)
        if condition == "UI"
        else (MODE_INFORMED, MODE_UNINFORMED)
    )


def _simulate_one_user(args: tuple) -> list[dict]:
    """Run both init modes for one user; returns JSON-ready run records."""
    config, run_index, user_seed, learner_seeds, priors, out_dir = args
    grid = config.level_mapping.grid()
    user_rng = np.random.default_rng(user_seed)
    ground_truth = pitch_dominant_ground_truth(
        grid, config.level_mapping, user_rng,
        states=config.states, jitter=config.affinity_jitter,
    )
    user = SimulatedUser(
        ground_truth=ground_truth,
        rng=user_rng,
        states=config.states,
        error_rate=config.error_rate,
        confidence_model=config.confidence_model,
        fixed_confidence=config.fixed_confidence,
    )
    condition = _condition_for(config, run_index)
    records = []
    for mode in _mode_order(condition):
        if mode not in config.init_modes:
            continue
        run_id = f"run{run_index:03d}"
        session_id = f"{run_id}-{mode}"
        seed = learner_seeds[mode]
        if mode == MODE_INFORMED:
            session = LearnerSession.informed(
                grid, config.states, config.hp, priors,
                seed=seed, schedule=config.schedule, session_id=session_id,
            )
        else:
            session = LearnerSession.uninformed(
                grid, config.states, config.hp,
                seed=seed, schedule=config.schedule, session_id=session_id,
            )
        log_rel = None
        log_path = None
        if out_dir is not None:
            log_rel = f"logs/{session_id}.jsonl"
            log_path = Path(out_dir) / log_rel
        run_learning_session(user, session, log_path=log_path)
        final = session.result()
        records.append(
            {
                "run_id": run_id,
                "condition": condition,
                "init_mode": mode,
                "steps": session.steps,
                "converged": session.status == STATUS_CONVERGED,
                "status": session.status,
                "final": {s: list(a.levels) for s, a in final.items()},
                "log": log_rel,
                "events": None if out_dir is not None else tuple(session.events),
            }
        )
    return records


def run_cohort(
    config: SimulationConfig,
    out_dir: str | Path | None = None,
    *,
    workers: int = 1,
) -> CohortResult:
    """Run the whole cohort; optionally persist logs plus a cohort summary."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "logs").mkdir(parents=True, exist_ok=True)
    grid = config.level_mapping.grid()

    reference = pitch_dominant_ground_truth(grid, config.level_mapping, states=config.states)
    priors = priors_from_ground_truth(reference, config.states, scale=config.prior_scale)
    validate_priors(priors, grid, config.states, config.hp)

    master = np.random.default_rng(config.seed)
    tasks = []
    for i in range(config.cohort):
        user_seed = int(master.integers(2**31))
        learner_seeds = {
            MODE_UNINFORMED: int(master.integers(2**31)),
            MODE_INFORMED: int(master.integers(2**31)),
        }
        tasks.append((config, i, user_seed, learner_seeds, priors, out))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_user = list(pool.map(_simulate_one_user, tasks))
    else:
        per_user = [_simulate_one_user(task) for task in tasks]

    runs = []
    for records in per_user:
        for r in records:
            runs.append(
                RunRecord(
                    run_id=r["run_id"],
                    condition=r["condition"],
                    init_mode=r["init_mode"],
                    steps=r["steps"],
                    converged=r["converged"],
                    status=r["status"],
                    final={s: tuple(levels) for s, levels in r["final"].items()},
                    log=(out / r["log"]) if (out is not None and r["log"]) else None,
                    events=r["events"],
                )
            )

    cohort = CohortResult(
        grid=grid, states=config.states, runs=runs, config=config.to_dict()
    )
    if out is not None:
        payload = {
            "version": 1,
            "config": config.to_dict(),
            "grid": grid.to_json(),
            "states": list(config.states),
            "priors": priors,
            "runs": [r.to_json() | {"log": f"logs/{r.run_id}-{r.init_mode}.jsonl"} for r in runs],
        }
        tmp = out / (COHORT_FILE + ".tmp")
        tmp.write_text(json.dumps(payload, indent=2) + "\n")
        tmp.replace(out / COHORT_FILE)
    return cohort
