from __future__ import annotations

import json

import numpy as np
import pytest

from sonolearn.bandit import Hyperparameters, LearnerSession, STATUS_RUNNING
from sonolearn.eventlog import (
    LogFormatError,
    LogWriter,
    event_record,
    learner_header,
    read_log,
    replay_log,
)
from sonolearn.grid import ParameterGrid

STATES = ("Stuck", "Accomplished", "Progressing")


def run_logged_session(path, seed=7, budget=20):
    grid = ParameterGrid.from_levels([("a", [0, 1]), ("b", [0, 1, 2])])
    hp = Hyperparameters(budget=budget, f_conv=3)
    session = LearnerSession.uninformed(grid, STATES, hp, seed=seed)
    writer = LogWriter(path)
    writer.append(learner_header(session))
    rng = np.random.default_rng(seed + 1)
    while session.status == STATUS_RUNNING:
        session.next_trial()
        answer = STATES[int(rng.integers(3))]
        event = session.make_feedback(answer, float(rng.uniform(0, 10)))
        session.apply_feedback(event)
        writer.append(event_record(event))
    return session


def test_replay_reconstructs_exact_state(tmp_path):
    path = tmp_path / "run.jsonl"
    live = run_logged_session(path)
    replayed, truncated = replay_log(path)
    assert not truncated
    assert replayed.status == live.status
    assert replayed.t == live.t
    for state in STATES:
        assert np.array_equal(replayed.tables[state].q, live.tables[state].q)
        assert np.array_equal(replayed.tables[state].n, live.tables[state].n)
        assert replayed.tables[state].f == live.tables[state].f
    assert replayed.result() == live.result()


def test_truncated_tail_is_dropped_with_notice(tmp_path):
    path = tmp_path / "run.jsonl"
    live = run_logged_session(path)
    with path.open("a") as fh:
        fh.write('{"type": "feedback", "t": 999, "s_re')  # partial write
    replayed, truncated = replay_log(path)
    assert truncated
    assert replayed.t == live.t


def test_corrupt_middle_record_names_position(tmp_path):
    path = tmp_path / "run.jsonl"
    run_logged_session(path)
    lines = path.read_text().splitlines()
    lines[2] = "{broken json"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(LogFormatError, match="record 3"):
        replay_log(path)


def test_tampered_action_detected(tmp_path):
    path = tmp_path / "run.jsonl"
    run_logged_session(path)
    lines = path.read_text().splitlines()
    record = json.loads(lines[1])
    record["action"] = [(record["action"][0] + 1) % 2, record["action"][1]]
    lines[1] = json.dumps(record)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(LogFormatError, match="record 2"):
        replay_log(path)


def test_empty_log_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(LogFormatError, match="empty"):
        read_log(path)


def test_header_must_come_first(tmp_path):
    path = tmp_path / "run.jsonl"
    path.write_text('{"type": "feedback", "t": 1}\n')
    with pytest.raises(LogFormatError, match="header"):
        read_log(path)


def test_wrong_kind_rejected(tmp_path):
    path = tmp_path / "run.jsonl"
    path.write_text(json.dumps({"type": "header", "kind": "study"}) + "\n")
    with pytest.raises(LogFormatError, match="learner"):
        replay_log(path)


def test_informed_session_replays_from_header(tmp_path):
    grid = ParameterGrid.from_levels([("a", [0, 1, 2])])
    hp = Hyperparameters(budget=10, f_conv=3)
    rng = np.random.default_rng(0)
    priors = {s: rng.uniform(-10, 10, size=3).tolist() for s in STATES}
    session = LearnerSession.informed(grid, STATES, hp, priors, seed=13)
    path = tmp_path / "informed.jsonl"
    writer = LogWriter(path)
    writer.append(learner_header(session))
    while session.status == STATUS_RUNNING:
        state, _ = session.next_trial()
        event = session.make_feedback(state, 9.0)
        session.apply_feedback(event)
        writer.append(event_record(event))
    replayed, _ = replay_log(path)
    for state in STATES:
        assert np.array_equal(replayed.tables[state].q, session.tables[state].q)
