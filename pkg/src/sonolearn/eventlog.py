"""Append-only JSONL logs for learner runs, and deterministic replay.

A log starts with a header record carrying the full configuration
(including the initial value tables and the seed) followed by one record
per applied feedback event. Replaying a log rebuilds the session through
the live code path and therefore reproduces value tables exactly.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .bandit import FeedbackEvent, Hyperparameters, LearnerSession
from .grid import ParameterGrid, encode_action

LOG_VERSION = 1


class LogFormatError(ValueError):
    """A log file is empty, malformed, or inconsistent with replay."""


def learner_header(session: LearnerSession) -> dict:
    return {
        "type": "header",
        "kind": "learner",
        "version": LOG_VERSION,
        "session_id": session.id,
        "seed": session.rng_seed,
        "schedule": session.schedule,
        "states": list(session.states),
        "grid": session.grid.to_json(),
        "hp": session.hp.to_dict(),
        "initial_q": {s: q.tolist() for s, q in session.initial_q.items()},
    }


def event_record(event: FeedbackEvent) -> dict:
    return {
        "type": "feedback",
        "t": event.t,
        "s_real": event.s_real,
        "action": list(event.action.levels),
        "s_infer": event.s_infer,
        "confidence": event.confidence,
        "replay_count": event.replay_count,
        "timestamp": event.timestamp,
    }


class LogWriter:
    """Appends one JSON record per line, flushing (and fsyncing) each write."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: dict) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def read_log(path: str | Path) -> tuple[dict, list[dict], bool]:
    """Parse a JSONL log into (header, records, truncated).

    A malformed final line is treated as a truncated write and dropped;
    a malformed line anywhere else is an error naming the record.
    """
    path = Path(path)
    raw_lines = path.read_text(encoding="utf-8").splitlines()
    lines = [(i, line) for i, line in enumerate(raw_lines, start=1) if line.strip()]
    if not lines:
        raise LogFormatError(f"{path}: log is empty")
    parsed: list[dict] = []
    truncated = False
    for pos, (lineno, line) in enumerate(lines):
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            if pos == len(lines) - 1:
                truncated = True
                break
            raise LogFormatError(f"{path}: record {lineno} is not valid JSON: {exc}") from exc
        if not isinstance(record, dict) or "type" not in record:
            raise LogFormatError(f"{path}: record {lineno} has no record type")
        parsed.append(record)
    if not parsed:
        raise LogFormatError(f"{path}: log has no complete records")
    header = parsed[0]
    if header.get("type") != "header":
        raise LogFormatError(f"{path}: record 1 is not a header record")
    return header, parsed[1:], truncated


def session_from_header(header: dict) -> LearnerSession:
    try:
        grid = ParameterGrid.from_json(header["grid"])
        return LearnerSession(
            grid=grid,
            states=header["states"],
            hp=Hyperparameters.from_dict(header["hp"]),
            initial_q=header["initial_q"],
            seed=header["seed"],
            schedule=header["schedule"],
            session_id=header["session_id"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise LogFormatError(f"bad header record: {exc}") from exc


def replay_learner(header: dict, records: list[dict]) -> LearnerSession:
    """Re-run a logged session; selection must match the log exactly."""
    session = session_from_header(header)
    for i, record in enumerate(records, start=2):
        if record.get("type") != "feedback":
            raise LogFormatError(f"record {i}: unexpected type {record.get('type')!r}")
        try:
            logged_action = encode_action(record["action"], session.grid)
            logged_state = record["s_real"]
            logged_t = int(record["t"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LogFormatError(f"record {i}: malformed feedback record: {exc}") from exc
        state, action = session.next_trial()
        if (state, action, session.t) != (logged_state, logged_action, logged_t):
            raise LogFormatError(
                f"record {i}: logged trial t={logged_t} ({logged_state!r}, "
                f"{logged_action.levels}) does not match replayed selection "
                f"t={session.t} ({state!r}, {action.levels})"
            )
        event = session.make_feedback(
            record["s_infer"],
            record["confidence"],
            replay_count=record.get("replay_count", 0),
            timestamp=record.get("timestamp"),
        )
        session.apply_feedback(event)
    return session


def replay_log(path: str | Path) -> tuple[LearnerSession, bool]:
    """Replay a learner log file. Returns (session, truncated)."""
    header, records, truncated = read_log(path)
    if header.get("kind") != "learner":
        raise LogFormatError(
            f"{path}: expected a learner log, got kind={header.get('kind')!r}"
        )
    return replay_learner(header, records), truncated
