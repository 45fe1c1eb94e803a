"""Study sessions: scripted assessments around paired learning runs.

A session walks one participant through a baseline listening assessment,
two learning subtasks (one per initialization mode, ordered by the
session's condition), and a post assessment that replays the sounds the
learner settled on. Every answered trial is journaled to a JSONL log
before it is acknowledged, and a session can be rebuilt from its log
alone. Responses shown to the participant never contain the robot's true
state or the acoustic parameters of the sound being judged.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import MODE_INFORMED, MODE_UNINFORMED
from .bandit import (
    Hyperparameters,
    LearnerSession,
    STATUS_RUNNING,
    SCHEDULE_UNIFORM,
    SessionStateError,
)
from .eventlog import LogFormatError, LogWriter, read_log
from .grid import ActionId, DEFAULT_STATES, ParameterGrid, encode_action
from .priors import load_priors, validate_priors
from .sound import SoundLibrary, load_library

PHASE_BASELINE = "BaselineAssess"
PHASE_LEARNING = "Learning"
PHASE_POST = "PostAssess"
PHASE_DONE = "Done"

CONDITIONS = ("UI", "IU")


class NotFoundError(LookupError):
    """Unknown session or library."""


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def default_baseline_mapping(grid: ParameterGrid, states: Sequence[str]) -> dict[str, tuple[int, ...]]:
    """Fixed pre-learning sounds: falling pitch + many beats for Stuck,
    rising pitch for Accomplished, flat pitch + single beat for Progressing,
    all at the middle tempo."""
    if tuple(states) != DEFAULT_STATES:
        raise ValueError(
            "baseline_mapping must be supplied explicitly for non-default state sets"
        )
    d_bpm, d_bpl, d_pitch = grid.sizes
    mid = lambda d: (d - 1) // 2  # noqa: E731
    stuck, accomplished, progressing = DEFAULT_STATES
    return {
        stuck: (mid(d_bpm), d_bpl - 1, 0),
        accomplished: (mid(d_bpm), mid(d_bpl), d_pitch - 1),
        progressing: (mid(d_bpm), 0, mid(d_pitch)),
    }


def _mode_order(condition: str) -> tuple[str, str]:
    if condition == "UI":
        return (MODE_UNINFORMED, MODE_INFORMED)
    if condition == "IU":
        return (MODE_INFORMED, MODE_UNINFORMED)
    raise ValueError(f"condition must be one of {CONDITIONS}, got {condition!r}")


def _shuffled(pairs: list, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [pairs[int(i)] for i in rng.permutation(len(pairs))]


@dataclass
class StudyConfig:
    """Resolved per-session configuration (condition and seeds fixed)."""

    library: str
    participant: str
    condition: str
    seed: int
    repeats: int
    schedule: str
    states: tuple[str, ...]
    hp: Hyperparameters
    priors: dict[str, list[float]]
    baseline_mapping: dict[str, tuple[int, ...]]
    mode_order: tuple[str, str]
    learner_seeds: tuple[int, int]
    baseline_shuffle_seed: int
    post_shuffle_seed: int

    def to_json(self) -> dict:
        return {
            "library": self.library,
            "participant": self.participant,
            "condition": self.condition,
            "seed": self.seed,
            "repeats": self.repeats,
            "schedule": self.schedule,
            "states": list(self.states),
            "hp": self.hp.to_dict(),
            "priors": self.priors,
            "baseline_mapping": {s: list(v) for s, v in self.baseline_mapping.items()},
            "mode_order": list(self.mode_order),
            "learner_seeds": list(self.learner_seeds),
            "baseline_shuffle_seed": self.baseline_shuffle_seed,
            "post_shuffle_seed": self.post_shuffle_seed,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "StudyConfig":
        return cls(
            library=obj["library"],
            participant=obj["participant"],
            condition=obj["condition"],
            seed=int(obj["seed"]),
            repeats=int(obj["repeats"]),
            schedule=obj["schedule"],
            states=tuple(obj["states"]),
            hp=Hyperparameters.from_dict(obj["hp"]),
            priors={s: list(v) for s, v in obj["priors"].items()},
            baseline_mapping={s: tuple(v) for s, v in obj["baseline_mapping"].items()},
            mode_order=tuple(obj["mode_order"]),
            learner_seeds=tuple(int(v) for v in obj["learner_seeds"]),
            baseline_shuffle_seed=int(obj["baseline_shuffle_seed"]),
            post_shuffle_seed=int(obj["post_shuffle_seed"]),
        )


def resolve_study_config(
    request: Mapping,
    library: SoundLibrary,
    *,
    data_dir: Path | None = None,
) -> StudyConfig:
    """Validate a session request and fix condition plus derived seeds.

    Seed draws happen in a documented fixed order so a logged session can
    be reproduced from its header alone.
    """
    states = tuple(request.get("states", DEFAULT_STATES))
    hp = Hyperparameters.from_dict(request.get("hp", {}))
    schedule = request.get("schedule", SCHEDULE_UNIFORM)
    repeats = int(request.get("repeats", 2))
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")

    condition = request.get("condition", "random")
    if condition not in CONDITIONS + ("random",):
        raise ValueError(f"condition must be UI, IU, or random, got {condition!r}")

    raw_priors = request.get("priors")
    if raw_priors is None:
        raise ValueError("priors are required (every condition includes an informed subtask)")
    if isinstance(raw_priors, str):
        path = Path(raw_priors)
        if not path.is_absolute() and data_dir is not None and (data_dir / path).is_file():
            path = data_dir / path
        priors = load_priors(path, library.grid, states, hp)
    else:
        priors = validate_priors(raw_priors, library.grid, states, hp)
    priors_json = {s: [float(v) for v in priors[s]] for s in states}

    raw_baseline = request.get("baseline_mapping")
    if raw_baseline is None:
        baseline = default_baseline_mapping(library.grid, states)
    else:
        baseline = {}
        for state in states:
            if state not in raw_baseline:
                raise ValueError(f"baseline_mapping missing state {state!r}")
            baseline[state] = encode_action(raw_baseline[state], library.grid).levels

    seed = request.get("seed")
    if seed is None:
        seed = int(np.random.default_rng().integers(2**31))
    seed = int(seed)
    rng = np.random.default_rng(seed)
    drawn_condition = CONDITIONS[int(rng.integers(2))]
    if condition == "random":
        condition = drawn_condition
    baseline_shuffle_seed = int(rng.integers(2**31))
    learner_seeds = (int(rng.integers(2**31)), int(rng.integers(2**31)))
    post_shuffle_seed = int(rng.integers(2**31))

    return StudyConfig(
        library=library.id if request.get("library") is None else request["library"],
        participant=str(request.get("participant", "participant")),
        condition=condition,
        seed=seed,
        repeats=repeats,
        schedule=schedule,
        states=states,
        hp=hp,
        priors=priors_json,
        baseline_mapping=baseline,
        mode_order=_mode_order(condition),
        learner_seeds=learner_seeds,
        baseline_shuffle_seed=baseline_shuffle_seed,
        post_shuffle_seed=post_shuffle_seed,
    )


class StudySession:
    """Single participant walking through baseline, learning, and post phases."""

    def __init__(
        self,
        session_id: str,
        config: StudyConfig,
        library: SoundLibrary,
        log_path: Path,
    ) -> None:
        self.id = session_id
        self.config = config
        self.library = library
        self.log_path = Path(log_path)
        self._writer = LogWriter(self.log_path)
        self.phase = PHASE_BASELINE
        self.trial_seq = 0
        self.outstanding: dict | None = None
        self.baseline_results: list[dict] = []
        self.post_results: list[dict] = []
        self.subtask_idx = 0
        self.final_mapping: dict[str, ActionId] | None = None

        grid = library.grid
        baseline_pairs = [
            (state, encode_action(config.baseline_mapping[state], grid))
            for state in config.states
            for _ in range(config.repeats)
        ]
        self.baseline_script = _shuffled(baseline_pairs, config.baseline_shuffle_seed)
        self.post_script: list[tuple[str, ActionId]] = []

        self.learners: list[LearnerSession] = []
        for order, (mode, seed) in enumerate(zip(config.mode_order, config.learner_seeds)):
            session_id_sub = f"{session_id}-{order + 1}-{mode}"
            if mode == MODE_INFORMED:
                learner = LearnerSession.informed(
                    grid, config.states, config.hp, config.priors,
                    seed=seed, schedule=config.schedule, session_id=session_id_sub,
                )
            else:
                learner = LearnerSession.uninformed(
                    grid, config.states, config.hp,
                    seed=seed, schedule=config.schedule, session_id=session_id_sub,
                )
            self.learners.append(learner)

    # -- creation and recovery -------------------------------------------

    @classmethod
    def create(
        cls,
        session_id: str,
        config: StudyConfig,
        library: SoundLibrary,
        log_path: Path,
    ) -> "StudySession":
        session = cls(session_id, config, library, log_path)
        session._writer.append(
            {
                "type": "header",
                "kind": "study",
                "version": 1,
                "session_id": session_id,
                "created_at": _utc_now(),
                "grid": library.grid.to_json(),
                "config": config.to_json(),
            }
        )
        return session

    @classmethod
    def load(
        cls,
        log_path: Path,
        resolve_library: Callable[[str], SoundLibrary],
    ) -> tuple["StudySession", bool]:
        """Rebuild a session by replaying its journal. Returns (session, truncated)."""
        header, records, truncated = read_log(log_path)
        if header.get("kind") != "study":
            raise LogFormatError(f"{log_path}: expected a study log, got {header.get('kind')!r}")
        if truncated:
            # Drop the partial trailing line so later appends stay well formed.
            raw = Path(log_path).read_bytes()
            Path(log_path).write_bytes(raw[: raw.rfind(b"\n") + 1])
        config = StudyConfig.from_json(header["config"])
        library = resolve_library(config.library)
        session = cls(header["session_id"], config, library, log_path)
        for i, record in enumerate(records, start=2):
            session._replay_record(i, record)
        return session, truncated

    def _replay_record(self, index: int, record: dict) -> None:
        kind = record.get("type")
        if kind not in ("assessment", "learning"):
            raise LogFormatError(f"record {index}: unexpected type {kind!r}")
        try:
            view_trial = self._ensure_outstanding()
            logged_action = tuple(record["action"])
            if (
                record["trial_id"] != view_trial["trial_id"]
                or record["s_real"] != view_trial["s_real"]
                or logged_action != view_trial["action"].levels
            ):
                raise LogFormatError(
                    f"record {index}: logged trial {record['trial_id']} "
                    f"({record['s_real']!r}, {logged_action}) does not match the "
                    f"replayed schedule ({view_trial['s_real']!r}, {view_trial['action'].levels})"
                )
            self._apply(
                record["s_infer"],
                float(record["confidence"]),
                int(record.get("replay_count", 0)),
                timestamp=record.get("timestamp"),
                log=False,
            )
        except LogFormatError:
            raise
        except (KeyError, TypeError, ValueError, SessionStateError) as exc:
            raise LogFormatError(f"record {index}: {exc}") from exc

    # -- trial flow --------------------------------------------------------

    def _current_learner(self) -> LearnerSession:
        return self.learners[self.subtask_idx]

    def _ensure_outstanding(self) -> dict:
        if self.phase == PHASE_DONE:
            raise SessionStateError("session is complete")
        if self.outstanding is not None:
            return self.outstanding
        if self.phase == PHASE_BASELINE:
            s_real, action = self.baseline_script[len(self.baseline_results)]
            subtask = None
        elif self.phase == PHASE_POST:
            s_real, action = self.post_script[len(self.post_results)]
            subtask = None
        else:
            learner = self._current_learner()
            s_real, action = learner.next_trial()
            subtask = self.subtask_idx
        self.trial_seq += 1
        self.outstanding = {
            "trial_id": f"t{self.trial_seq:04d}",
            "phase": self.phase,
            "subtask": subtask,
            "s_real": s_real,
            "action": action,
        }
        return self.outstanding

    def trial_view(self, trial: dict) -> dict:
        """Participant-facing view: opaque audio URL, no true state, no levels."""
        return {
            "trial_id": trial["trial_id"],
            "phase": trial["phase"],
            "trial_number": self.trial_seq,
            "audio_url": f"/sessions/{self.id}/trials/{trial['trial_id']}/audio.wav",
            "state_options": list(self.config.states),
            "confidence": {"min": 0.0, "max": 10.0, "step": 0.5},
            "replays": "unlimited",
        }

    def next_view(self) -> dict:
        if self.outstanding is not None:
            raise SessionStateError(
                f"trial {self.outstanding['trial_id']} is still awaiting feedback"
            )
        return self.trial_view(self._ensure_outstanding())

    def audio_path(self, trial_id: str) -> Path:
        if self.outstanding is None or self.outstanding["trial_id"] != trial_id:
            raise NotFoundError(f"no pending trial {trial_id}")
        return self.library.path_for(self.outstanding["action"])

    def submit(
        self,
        trial_id: str,
        s_infer: str,
        confidence: float,
        replay_count: int = 0,
    ) -> dict:
        if self.phase == PHASE_DONE:
            raise SessionStateError("session is complete")
        if self.outstanding is None:
            raise SessionStateError(
                f"no trial awaiting feedback (duplicate or stale submission of {trial_id})"
            )
        if trial_id != self.outstanding["trial_id"]:
            raise SessionStateError(
                f"stale trial id {trial_id}, expected {self.outstanding['trial_id']}"
            )
        if s_infer not in self.config.states:
            raise ValueError(f"unknown state {s_infer!r}, options: {list(self.config.states)}")
        confidence = float(confidence)
        if not 0.0 <= confidence <= 10.0:
            raise ValueError(f"confidence must be in [0, 10], got {confidence}")
        replay_count = int(replay_count)
        if replay_count < 0:
            raise ValueError(f"replay_count must be >= 0, got {replay_count}")
        return self._apply(s_infer, confidence, replay_count, timestamp=_utc_now(), log=True)

    def _apply(
        self,
        s_infer: str,
        confidence: float,
        replay_count: int,
        *,
        timestamp: str | None,
        log: bool,
    ) -> dict:
        trial = self.outstanding
        assert trial is not None
        if trial["phase"] == PHASE_LEARNING:
            return self._apply_learning(trial, s_infer, confidence, replay_count, timestamp, log)
        return self._apply_assessment(trial, s_infer, confidence, replay_count, timestamp, log)

    def _apply_assessment(self, trial, s_infer, confidence, replay_count, timestamp, log) -> dict:
        correct = s_infer == trial["s_real"]
        phase = trial["phase"]
        results = self.baseline_results if phase == PHASE_BASELINE else self.post_results
        record = {
            "type": "assessment",
            "phase": phase,
            "trial_id": trial["trial_id"],
            "index": len(results),
            "s_real": trial["s_real"],
            "action": list(trial["action"].levels),
            "s_infer": s_infer,
            "confidence": confidence,
            "replay_count": replay_count,
            "correct": correct,
            "timestamp": timestamp,
        }
        if log:
            self._writer.append(record)
        results.append(record)
        self.outstanding = None
        script = self.baseline_script if phase == PHASE_BASELINE else self.post_script
        phase_complete = len(results) == len(script)
        if phase_complete:
            self.phase = PHASE_LEARNING if phase == PHASE_BASELINE else PHASE_DONE
        return {
            "accepted": True,
            "trial_id": trial["trial_id"],
            "phase": self.phase,
            "trials_completed": self.trial_seq,
            "phase_complete": phase_complete,
            "done": self.phase == PHASE_DONE,
        }

    def _apply_learning(self, trial, s_infer, confidence, replay_count, timestamp, log) -> dict:
        learner = self.learners[trial["subtask"]]
        event = learner.make_feedback(
            s_infer, confidence, replay_count=replay_count, timestamp=timestamp
        )
        record = {
            "type": "learning",
            "trial_id": trial["trial_id"],
            "subtask": trial["subtask"],
            "mode": self.config.mode_order[trial["subtask"]],
            "t": event.t,
            "s_real": event.s_real,
            "action": list(event.action.levels),
            "s_infer": event.s_infer,
            "confidence": event.confidence,
            "replay_count": event.replay_count,
            "timestamp": timestamp,
        }
        if log:
            self._writer.append(record)
        outcome = learner.apply_feedback(event)
        self.outstanding = None
        subtask_complete = learner.status != STATUS_RUNNING
        if subtask_complete:
            self.subtask_idx += 1
            if self.subtask_idx == len(self.learners):
                self._enter_post_phase()
        converged = sum(1 for s in learner.states if learner.tables[s].converged)
        return {
            "accepted": True,
            "trial_id": trial["trial_id"],
            "phase": self.phase,
            "trials_completed": self.trial_seq,
            "learning": {
                "subtask": trial["subtask"] + 1,
                "subtasks": len(self.learners),
                "t": outcome.t,
                "budget": self.config.hp.budget,
                "states_converged": converged,
                "states_total": len(learner.states),
                "subtask_complete": subtask_complete,
            },
            "done": self.phase == PHASE_DONE,
        }

    def _enter_post_phase(self) -> None:
        self.final_mapping = self.learners[-1].result()
        pairs = [
            (state, self.final_mapping[state])
            for state in self.config.states
            for _ in range(self.config.repeats)
        ]
        self.post_script = _shuffled(pairs, self.config.post_shuffle_seed)
        self.phase = PHASE_POST

    # -- views ---------------------------------------------------------------

    def status_view(self) -> dict:
        answered = self.trial_seq - (1 if self.outstanding is not None else 0)
        view = {
            "id": self.id,
            "phase": self.phase,
            "participant": self.config.participant,
            "trials_completed": answered,
            "outstanding_trial": (
                self.trial_view(self.outstanding) if self.outstanding is not None else None
            ),
            "done": self.phase == PHASE_DONE,
        }
        if self.phase == PHASE_LEARNING:
            learner = self._current_learner()
            view["learning"] = {
                "subtask": self.subtask_idx + 1,
                "subtasks": len(self.learners),
                "t": learner.t,
                "budget": self.config.hp.budget,
                "states_converged": sum(
                    1 for s in learner.states if learner.tables[s].converged
                ),
                "states_total": len(learner.states),
            }
        return view

    def _assessment_report(self, results: list[dict]) -> dict:
        correct = sum(1 for r in results if r["correct"])
        return {
            "correct": correct,
            "total": len(results),
            "accuracy": correct / len(results) if results else None,
            "trials": [
                {
                    "trial_id": r["trial_id"],
                    "s_real": r["s_real"],
                    "action_levels": list(r["action"]),
                    "file": self.library.file_for(
                        encode_action(r["action"], self.library.grid)
                    ),
                    "s_infer": r["s_infer"],
                    "confidence": r["confidence"],
                    "replay_count": r["replay_count"],
                    "correct": r["correct"],
                }
                for r in results
            ],
        }

    def report(self) -> dict:
        if self.phase != PHASE_DONE:
            raise SessionStateError("report is available once the session is Done")
        baseline = self._assessment_report(self.baseline_results)
        post = self._assessment_report(self.post_results)
        learning = []
        for order, (mode, learner) in enumerate(zip(self.config.mode_order, self.learners)):
            mapping = learner.result()
            learning.append(
                {
                    "order": order + 1,
                    "mode": mode,
                    "status": learner.status,
                    "steps": learner.steps,
                    "t": learner.t,
                    "mapping": {
                        state: {
                            "levels": list(action.levels),
                            "file": self.library.file_for(action),
                        }
                        for state, action in mapping.items()
                    },
                }
            )
        assert self.final_mapping is not None
        return {
            "session_id": self.id,
            "participant": self.config.participant,
            "condition": self.config.condition,
            "library": self.config.library,
            "seed": self.config.seed,
            "baseline": baseline,
            "post": post,
            "improvement": post["correct"] - baseline["correct"],
            "learning": learning,
            "final_mapping": {
                state: {
                    "levels": list(action.levels),
                    "file": self.library.file_for(action),
                }
                for state, action in self.final_mapping.items()
            },
        }


class SessionStore:
    """Flat-file session registry: one JSONL journal per session plus an index."""

    def __init__(self, data_dir: str | Path, library_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.library_dir = Path(library_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, StudySession] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._libraries: dict[str, SoundLibrary] = {}

    def lock(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def get_library(self, name: str) -> SoundLibrary:
        with self._registry_lock:
            if name in self._libraries:
                return self._libraries[name]
        directory = self.library_dir / name
        if not (directory / "manifest.json").is_file():
            raise NotFoundError(f"unknown sound library {name!r}")
        library = load_library(directory)
        with self._registry_lock:
            self._libraries[name] = library
        return library

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def _update_index(self, session: StudySession) -> None:
        with self._registry_lock:
            index_path = self.sessions_dir / "index.json"
            index = {}
            if index_path.is_file():
                index = json.loads(index_path.read_text())
            index[session.id] = {
                "participant": session.config.participant,
                "created_at": _utc_now(),
                "log": session.log_path.name,
            }
            tmp = index_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(index, indent=2) + "\n")
            tmp.replace(index_path)

    def create_session(self, request: Mapping) -> StudySession:
        library_name = request.get("library")
        if not library_name:
            raise ValueError("request must name a sound library")
        library = self.get_library(library_name)
        config = resolve_study_config(request, library, data_dir=self.data_dir)
        session_id = uuid.uuid4().hex[:12]
        session = StudySession.create(
            session_id, config, library, self._log_path(session_id)
        )
        with self._registry_lock:
            self._sessions[session_id] = session
            self._locks.setdefault(session_id, threading.Lock())
        self._update_index(session)
        return session

    def get(self, session_id: str) -> StudySession:
        with self._registry_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        log_path = self._log_path(session_id)
        if not log_path.is_file():
            raise NotFoundError(f"unknown session {session_id!r}")
        session, _ = StudySession.load(log_path, self.get_library)
        with self._registry_lock:
            session = self._sessions.setdefault(session_id, session)
        return session
