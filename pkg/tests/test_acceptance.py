"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
lines, or `pytest -v` for the per-test verdicts.
"""

from __future__ import annotations

import math
import wave

import numpy as np
import pytest
from fastapi.testclient import TestClient
from support import scan_blind

from sonolearn.analysis import heatmap, ranked_pair_statistic
from sonolearn.bandit import (
    Hyperparameters,
    LearnerSession,
    STATUS_CONVERGED,
    STATUS_RUNNING,
    uncertainty,
    update_q,
)
from sonolearn.eventlog import LogWriter, event_record, learner_header, replay_log
from sonolearn.grid import DEFAULT_STATES, ParameterGrid
from sonolearn.priors import pitch_dominant_priors, save_priors
from sonolearn.service import ServiceConfig, create_app
from sonolearn.simulate import SimulationConfig, run_cohort
from sonolearn.simusers import SimulatedUser, pitch_dominant_ground_truth
from sonolearn.sound import (
    LevelMapping,
    RenderConfig,
    assemble_loop,
    default_base_sample,
    generate_library,
    normalize_peak,
    write_wav,
)

MAPPING = LevelMapping()


@pytest.fixture(scope="module")
def cohort24():
    config = SimulationConfig(cohort=24, seed=20240601, error_rate=0.1,
                              confidence_model="affinity")
    return run_cohort(config)


def test_criterion_01_q_update_arithmetic():
    assert update_q(10.0, 1, 7.0) == 7.0
    assert update_q(10.0, 2, -4.0) == 3.0
    print("PASS criterion 1: value-update arithmetic exact")


def test_criterion_02_uncertainty_formula():
    assert uncertainty(2, 4, 0.5) == pytest.approx(0.58871, abs=1e-5)
    assert uncertainty(1, 1, 0.5) == 0.0
    for t in (1, 5, 60):
        assert uncertainty(0, t, 0.5) == math.inf
    print("PASS criterion 2: uncertainty formula matches at 1e-5")


def test_criterion_03_boundedness_property():
    rng = np.random.default_rng(303)
    grid = ParameterGrid.from_levels([("a", [0, 1]), ("b", [0, 1])])
    hp = Hyperparameters(budget=12, f_conv=10**6)
    for _ in range(1000):
        seed = int(rng.integers(2**31))
        priors = {
            s: rng.uniform(-10, 10, size=grid.action_count).tolist()
            for s in DEFAULT_STATES
        }
        session = LearnerSession.informed(grid, DEFAULT_STATES, hp, priors, seed=seed)
        while session.status == STATUS_RUNNING:
            session.next_trial()
            answer = DEFAULT_STATES[int(rng.integers(3))]
            session.apply_feedback(
                session.make_feedback(answer, float(rng.uniform(0, 10)))
            )
            for s in DEFAULT_STATES:
                q = session.tables[s].q
                assert np.all(q >= -10.0) and np.all(q <= 10.0)
    print("PASS criterion 3: 1000 random feedback sequences stay within [-10, 10]")


def test_criterion_04_optimistic_exploration():
    grid = MAPPING.grid()
    hp = Hyperparameters(budget=100, f_conv=10**6)
    for seed in range(100):
        session = LearnerSession.uninformed(grid, ["Stuck"], hp, seed=seed)
        rng = np.random.default_rng(10_000 + seed)
        first = []
        for _ in range(27):
            _, action = session.next_trial()
            first.append(action.flat)
            answer = DEFAULT_STATES[int(rng.integers(3))]
            session.apply_feedback(
                session.make_feedback(answer, float(rng.uniform(0, 10)))
            )
        assert sorted(first) == list(range(27)), f"seed {seed} not a permutation"
    print("PASS criterion 4: first 27 selections form a permutation in 100/100 seeds")


def test_criterion_05_noiseless_convergence():
    grid = MAPPING.grid()
    target = "Stuck"
    ground_truth = pitch_dominant_ground_truth(grid, MAPPING)
    assert ground_truth.preferred.count(target) == 9
    converged = 0
    on_target = 0
    for seed in range(100):
        user = SimulatedUser.create(
            ground_truth, seed=seed, error_rate=0.0,
            confidence_model="fixed", fixed_confidence=10.0,
        )
        session = LearnerSession.uninformed(grid, [target], seed=seed)
        while session.status == STATUS_RUNNING:
            _, action = session.next_trial()
            s_infer, confidence = user.respond(action)
            session.apply_feedback(session.make_feedback(s_infer, confidence))
        if session.status == STATUS_CONVERGED:
            converged += 1
            if ground_truth.preferred_state(session.result()[target]) == target:
                on_target += 1
    assert converged >= 95, f"only {converged}/100 converged"
    assert on_target == converged, "a converged run settled off the target set"
    print(
        f"PASS criterion 5: {converged}/100 converged within budget, "
        f"{on_target}/{converged} on the target set"
    )


def test_criterion_06_informed_speedup(cohort24):
    informed = cohort24.steps_for("informed")
    uninformed = cohort24.steps_for("uninformed")
    assert len(informed) == len(uninformed) == 24
    mean_informed = sum(informed) / len(informed)
    mean_uninformed = sum(uninformed) / len(uninformed)
    assert mean_informed < mean_uninformed
    result = ranked_pair_statistic(informed, uninformed)
    assert result.p_value < 0.05
    print(
        f"PASS criterion 6: informed mean {mean_informed:.2f} < uninformed mean "
        f"{mean_uninformed:.2f}, ranked sum {result.ranked_sum:.0f}/{result.max_sum}, "
        f"p = {result.p_value:.2e}"
    )


def test_criterion_07_ranked_statistic_oracle():
    assert ranked_pair_statistic([1, 3], [2, 4]).ranked_sum == 3.0
    rng = np.random.default_rng(7)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        m = int(rng.integers(1, 12))
        a = rng.integers(0, 8, size=n).astype(float).tolist()
        b = rng.integers(0, 8, size=m).astype(float).tolist()
        total = (
            ranked_pair_statistic(a, b).ranked_sum
            + ranked_pair_statistic(b, a).ranked_sum
        )
        assert total == n * m
    print("PASS criterion 7: hand-enumerated ranked sum and exact antisymmetry")


def test_criterion_08_sound_library(tmp_path):
    base = default_base_sample()
    config = RenderConfig()
    grid = MAPPING.grid()
    library = generate_library(base, grid, MAPPING, config, tmp_path / "lib")
    assert len(library.files) == 27

    sample_rate = config.sample_rate
    for action in grid.actions():
        params = MAPPING.params_for(action)
        with wave.open(str(library.path_for(action)), "rb") as fh:
            frames = fh.getnframes()
            assert fh.getframerate() == sample_rate
        expected = params.bpl * 60.0 / params.bpm
        assert abs(frames / sample_rate - expected) <= 1.0 / sample_rate

    # zero-bend renders byte-equal their plain assembly
    zero_bend = [a for a in grid.actions() if MAPPING.pitch_levels[a.levels[2]] == 0.0]
    assert len(zero_bend) == 9
    for action in zero_bend:
        params = MAPPING.params_for(action)
        assembled = normalize_peak(
            assemble_loop(base, params.bpm, params.bpl, sample_rate), config.peak
        )
        reference_path = tmp_path / "ref.wav"
        write_wav(reference_path, assembled, sample_rate)
        assert library.path_for(action).read_bytes() == reference_path.read_bytes()

    again = generate_library(base, grid, MAPPING, config, tmp_path / "lib2")
    for name in library.files:
        assert (tmp_path / "lib" / name).read_bytes() == (tmp_path / "lib2" / name).read_bytes()
    print("PASS criterion 8: 27 files, duration law, zero-bend identity, regeneration")


def test_criterion_09_replay_durability(tmp_path):
    grid = MAPPING.grid()
    reference = pitch_dominant_ground_truth(grid, MAPPING)
    priors = pitch_dominant_priors(grid, MAPPING)
    for i in range(20):
        informed = i % 2 == 1
        if informed:
            session = LearnerSession.informed(
                grid, DEFAULT_STATES, Hyperparameters(), priors, seed=i
            )
        else:
            session = LearnerSession.uninformed(grid, DEFAULT_STATES, seed=i)
        user = SimulatedUser.create(reference, seed=1000 + i, error_rate=0.15)
        path = tmp_path / f"run{i}.jsonl"
        writer = LogWriter(path)
        writer.append(learner_header(session))
        while session.status == STATUS_RUNNING:
            _, action = session.next_trial()
            s_infer, confidence = user.respond(action)
            event = session.make_feedback(s_infer, confidence)
            session.apply_feedback(event)
            writer.append(event_record(event))
        replayed, truncated = replay_log(path)
        assert not truncated
        for state in DEFAULT_STATES:
            np.testing.assert_allclose(
                replayed.tables[state].q, session.tables[state].q,
                rtol=1e-12, atol=0,
            )
        assert replayed.result() == session.result()
    print("PASS criterion 9: 20 replays match live q tables at 12 significant digits")


def test_criterion_10_heatmap_conservation(cohort24):
    grid_counts = heatmap(cohort24)
    runs_per_mode = {
        mode: sum(1 for r in cohort24.runs if r.init_mode == mode)
        for mode in grid_counts.modes
    }
    for state in DEFAULT_STATES:
        for mode in grid_counts.modes:
            assert grid_counts.counts[(state, mode)].sum() == runs_per_mode[mode]

    stuck_total = sum(
        grid_counts.counts[("Stuck", mode)].sum() for mode in grid_counts.modes
    )
    negative_pitch = sum(
        grid_counts.counts[("Stuck", mode)][:, :, 0].sum() for mode in grid_counts.modes
    )
    share = negative_pitch / stuck_total
    assert share >= 0.70
    print(
        f"PASS criterion 10: counts conserved per (state, mode); "
        f"{share:.0%} of Stuck mass on the falling-pitch plane"
    )


def test_criterion_11_blindness(tmp_path, default_library):
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    priors_path = data_dir / "priors.json"
    save_priors(
        priors_path,
        pitch_dominant_priors(default_library.grid, default_library.level_mapping),
    )
    app = create_app(
        ServiceConfig(data_dir=data_dir, library_dir=default_library.root.parent)
    )
    client = TestClient(app)
    created = client.post(
        "/sessions",
        json={
            "library": "default",
            "condition": "UI",
            "seed": 11,
            "priors": str(priors_path),
            "repeats": 2,
        },
    )
    assert created.status_code == 201
    scan_blind(created.json(), allow_state_values_under=("state_options", "states"))
    session_id = created.json()["id"]

    rng = np.random.default_rng(11)
    responses_scanned = 0
    while True:
        status = client.get(f"/sessions/{session_id}/status")
        scan_blind(status.json())
        responses_scanned += 1
        if status.json()["done"]:
            break
        view = client.get(f"/sessions/{session_id}/next")
        assert view.status_code == 200
        scan_blind(view.json())
        ack = client.post(
            f"/sessions/{session_id}/trials/{view.json()['trial_id']}/feedback",
            json={
                "s_infer": DEFAULT_STATES[int(rng.integers(3))],
                "confidence": float(rng.integers(0, 11)),
            },
        )
        assert ack.status_code == 200
        scan_blind(ack.json())
        responses_scanned += 2
    report = client.get(f"/sessions/{session_id}/report")
    assert report.status_code == 200  # report is post-study, not scanned
    assert responses_scanned > 30
    print(
        f"PASS criterion 11: {responses_scanned} participant-facing responses "
        "free of hidden-state and parameter leaks"
    )
