"""Value-table learner driven by per-trial listener feedback.

One table of action values is kept per robot state. Each trial targets a
single not-yet-converged state, plays the action with the highest value
plus uncertainty bonus, and folds the listener's (possibly wrong,
confidence-weighted) answer back into every table: the state the listener
named is credited at the played action, every other state is penalized at
the same action. A state settles once enough qualifying correct answers
arrive consecutively; a hard trial budget caps the whole session.
"""

from __future__ import annotations

import math
import uuid
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .grid import ActionId, DEFAULT_STATES, ParameterGrid, decode_action

STATUS_RUNNING = "Running"
STATUS_CONVERGED = "Converged"
STATUS_BUDGET_EXHAUSTED = "BudgetExhausted"

SCHEDULE_UNIFORM = "uniform"
SCHEDULE_ROUND_ROBIN = "round_robin"
SCHEDULES = (SCHEDULE_UNIFORM, SCHEDULE_ROUND_ROBIN)


class SessionStateError(RuntimeError):
    """Trial/feedback alternation or session lifecycle violated."""


@dataclass(frozen=True)
class Hyperparameters:
    """Learner knobs.

    z scales the exploration bonus, budget caps total trials per session,
    f_conv is the consecutive-success count that settles a state, and
    delta_q_conv is the largest value change still counted as stable.
    Values live in [q_min, q_max].
    """

    z: float = 0.5
    budget: int = 60
    f_conv: int = 3
    delta_q_conv: float = 2.0
    q_max: float = 10.0
    q_min: float = -10.0

    def __post_init__(self) -> None:
        if self.z <= 0:
            raise ValueError(f"z must be positive, got {self.z}")
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.f_conv < 1:
            raise ValueError(f"f_conv must be >= 1, got {self.f_conv}")
        if self.delta_q_conv < 0:
            raise ValueError(f"delta_q_conv must be >= 0, got {self.delta_q_conv}")
        if self.q_min >= self.q_max:
            raise ValueError(
                f"q_min must be below q_max, got [{self.q_min}, {self.q_max}]"
            )

    def to_dict(self) -> dict:
        return {
            "z": self.z,
            "budget": self.budget,
            "f_conv": self.f_conv,
            "delta_q_conv": self.delta_q_conv,
            "q_max": self.q_max,
            "q_min": self.q_min,
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "Hyperparameters":
        known = {f: obj[f] for f in cls.__dataclass_fields__ if f in obj}
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(**known)


@dataclass
class QTable:
    """Per-state value/count arrays plus convergence bookkeeping."""

    state: str
    grid: ParameterGrid
    q: np.ndarray
    n: np.ndarray
    f: int = 0
    last_action: ActionId | None = None
    last_delta_q: float | None = None
    converged: bool = False
    converged_action: ActionId | None = None


@dataclass(frozen=True)
class FeedbackEvent:
    """One trial's listener response."""

    session_id: str
    t: int
    s_real: str
    action: ActionId
    s_infer: str
    confidence: float
    replay_count: int = 0
    timestamp: str | None = None


@dataclass(frozen=True)
class RewardUpdate:
    """Signed, confidence-scaled reward for the targeted state."""

    s_check: int
    reward: float


@dataclass(frozen=True)
class TrialOutcome:
    """Summary of one applied feedback event."""

    t: int
    state: str
    action: ActionId
    s_infer: str
    confidence: float
    s_check: int
    reward: float
    q_deltas: dict[str, float]
    f: int
    newly_converged: bool
    status: str


def uncertainty(n: int, t: int, z: float) -> float:
    """Exploration bonus z * sqrt(2 * ln(t) / n) after n visits at iteration t.

    Unvisited actions (n == 0) get an infinite bonus so they are always
    preferred over visited ones.
    """
    t = int(t)
    n = int(n)
    if t < 1:
        raise ValueError(f"iteration counter must be >= 1, got {t}")
    if n < 0:
        raise ValueError(f"visit count must be >= 0, got {n}")
    if n == 0:
        return math.inf
    return z * math.sqrt(2.0 * math.log(t) / n)


def compute_reward(s_real: str, s_infer: str, confidence: float) -> RewardUpdate:
    """+confidence when the inferred state matches the real one, else -confidence."""
    confidence = float(confidence)
    if not 0.0 <= confidence <= 10.0:
        raise ValueError(f"confidence must be in [0, 10], got {confidence}")
    s_check = 1 if s_infer == s_real else -1
    return RewardUpdate(s_check=s_check, reward=s_check * confidence)


def update_q(q_old: float, n: int, reward: float) -> float:
    """Running-mean update: the n-th observation moves the value by
    (reward - q_old) / n.

    With n == 1 the previous (initial) value is discarded entirely.
    """
    n = int(n)
    if n < 1:
        raise ValueError("update requires the visit count to be incremented first")
    if n == 1:
        return float(reward)
    return float(q_old) + (float(reward) - float(q_old)) / n


def select_action(
    table: QTable, t: int, z: float, rng: np.random.Generator
) -> ActionId:
    """Pick the action maximizing value plus uncertainty bonus.

    Unvisited actions carry an infinite bonus and are hence taken first;
    among those, the highest stored value wins, so a primed table is
    explored in value order while a flat one is explored at random.
    Remaining ties are broken uniformly at random.
    """
    t = int(t)
    if t < 1:
        raise ValueError(f"iteration counter must be >= 1, got {t}")
    bonus = np.full(table.q.shape, math.inf)
    visited = table.n > 0
    if visited.any():
        bonus[visited] = z * np.sqrt(2.0 * math.log(t) / table.n[visited])
    scores = table.q + bonus
    tied = np.flatnonzero(scores == scores.max())
    if tied.size > 1:
        q_tied = table.q[tied]
        tied = tied[q_tied == q_tied.max()]
    # Always consume exactly one draw so replay stays aligned.
    pick = tied[int(rng.integers(tied.size))]
    return decode_action(int(pick), table.grid)


class LearnerSession:
    """One learning run: per-state tables, a global trial counter, and an
    owned random stream.

    Mutating calls (next_trial, apply_feedback) must alternate strictly and
    be serialized by the caller; everything else is read-only.
    """

    def __init__(
        self,
        *,
        grid: ParameterGrid,
        states: Sequence[str],
        hp: Hyperparameters,
        initial_q: Mapping[str, Sequence[float]],
        seed: int,
        schedule: str = SCHEDULE_UNIFORM,
        session_id: str | None = None,
    ) -> None:
        states = tuple(str(s) for s in states)
        if len(states) < 1:
            raise ValueError("need at least one state")
        if len(set(states)) != len(states):
            raise ValueError(f"state names must be unique: {states}")
        if schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {schedule!r}, expected one of {SCHEDULES}")
        missing = [s for s in states if s not in initial_q]
        if missing:
            raise ValueError(f"initial values missing for states: {missing}")
        self.id = session_id or uuid.uuid4().hex[:12]
        self.grid = grid
        self.states = states
        self.hp = hp
        self.schedule = schedule
        self.rng_seed = int(seed)
        self._rng = np.random.default_rng(self.rng_seed)
        self.t = 0
        self.status = STATUS_RUNNING
        self.pending_trial: tuple[str, ActionId] | None = None
        self.events: list[FeedbackEvent] = []
        self._rr_cursor = -1  # index of the last round-robin target
        self.initial_q: dict[str, np.ndarray] = {}
        self.tables: dict[str, QTable] = {}
        for state in states:
            q0 = np.asarray(initial_q[state], dtype=np.float64).copy()
            if q0.shape != (grid.action_count,):
                raise ValueError(
                    f"initial values for state {state!r} must have length "
                    f"{grid.action_count}, got {q0.shape}"
                )
            bad = np.flatnonzero((q0 < hp.q_min) | (q0 > hp.q_max))
            if bad.size:
                i = int(bad[0])
                raise ValueError(
                    f"initial value {q0[i]} for state {state!r} action {i} outside "
                    f"[{hp.q_min}, {hp.q_max}]"
                )
            self.initial_q[state] = q0.copy()
            self.tables[state] = QTable(
                state=state,
                grid=grid,
                q=q0,
                n=np.zeros(grid.action_count, dtype=np.int64),
            )

    @classmethod
    def uninformed(
        cls,
        grid: ParameterGrid,
        states: Sequence[str] = DEFAULT_STATES,
        hp: Hyperparameters | None = None,
        *,
        seed: int,
        schedule: str = SCHEDULE_UNIFORM,
        session_id: str | None = None,
    ) -> "LearnerSession":
        """Start every action at the maximum value so everything looks worth trying."""
        hp = hp or Hyperparameters()
        q0 = {s: np.full(grid.action_count, hp.q_max) for s in states}
        return cls(
            grid=grid, states=states, hp=hp, initial_q=q0,
            seed=seed, schedule=schedule, session_id=session_id,
        )

    @classmethod
    def informed(
        cls,
        grid: ParameterGrid,
        states: Sequence[str],
        hp: Hyperparameters,
        priors: Mapping[str, Sequence[float]],
        *,
        seed: int,
        schedule: str = SCHEDULE_UNIFORM,
        session_id: str | None = None,
    ) -> "LearnerSession":
        """Start from supplied per-(state, action) values in [q_min, q_max]."""
        missing = [s for s in states if s not in priors]
        if missing:
            raise ValueError(f"priors missing for states: {missing}")
        return cls(
            grid=grid, states=states, hp=hp, initial_q=priors,
            seed=seed, schedule=schedule, session_id=session_id,
        )

    @property
    def unconverged_states(self) -> tuple[str, ...]:
        return tuple(s for s in self.states if not self.tables[s].converged)

    @property
    def steps(self) -> int | None:
        """Applied trials at completion; the full budget if it ran out."""
        if self.status == STATUS_CONVERGED:
            return self.t
        if self.status == STATUS_BUDGET_EXHAUSTED:
            return self.hp.budget
        return None

    def next_trial(self) -> tuple[str, ActionId]:
        """Advance the trial counter, pick the next (state, action) pair, and
        leave it pending until feedback arrives."""
        if self.status != STATUS_RUNNING:
            raise SessionStateError(f"session is {self.status}, not Running")
        if self.pending_trial is not None:
            raise SessionStateError("a trial is already awaiting feedback")
        candidates = self.unconverged_states
        if not candidates:
            raise SessionStateError("no unconverged states left")
        if self.schedule == SCHEDULE_ROUND_ROBIN:
            state = self._round_robin_next(candidates)
        else:
            state = candidates[int(self._rng.integers(len(candidates)))]
        self.t += 1
        table = self.tables[state]
        action = select_action(table, self.t, self.hp.z, self._rng)
        table.n[action.flat] += 1
        self.pending_trial = (state, action)
        return state, action

    def _round_robin_next(self, candidates: tuple[str, ...]) -> str:
        count = len(self.states)
        for offset in range(1, count + 1):
            idx = (self._rr_cursor + offset) % count
            if self.states[idx] in candidates:
                self._rr_cursor = idx
                return self.states[idx]
        raise SessionStateError("no unconverged states left")  # unreachable

    def make_feedback(
        self,
        s_infer: str,
        confidence: float,
        *,
        replay_count: int = 0,
        timestamp: str | None = None,
    ) -> FeedbackEvent:
        """Build the feedback event for the pending trial."""
        if self.pending_trial is None:
            raise SessionStateError("no trial awaiting feedback")
        state, action = self.pending_trial
        return FeedbackEvent(
            session_id=self.id,
            t=self.t,
            s_real=state,
            action=action,
            s_infer=str(s_infer),
            confidence=float(confidence),
            replay_count=int(replay_count),
            timestamp=timestamp,
        )

    def apply_feedback(self, event: FeedbackEvent) -> TrialOutcome:
        """Fold one listener response into every state's table.

        The table of the state the listener named is updated with
        +confidence at the played action; every other table gets
        -confidence there. Convergence accounting only touches the
        targeted state's table.
        """
        if self.pending_trial is None:
            raise SessionStateError("no trial awaiting feedback")
        state, action = self.pending_trial
        if event.s_real != state or event.action != action or event.t != self.t:
            raise SessionStateError(
                f"stale or duplicated feedback: expected t={self.t} "
                f"({state!r}, {action.levels}), got t={event.t} "
                f"({event.s_real!r}, {event.action.levels})"
            )
        reward_update = compute_reward(event.s_real, event.s_infer, event.confidence)

        flat = action.flat
        q_deltas: dict[str, float] = {}
        for s in self.states:
            table = self.tables[s]
            if s != event.s_real:
                table.n[flat] += 1  # targeted table was counted at selection
            per_table_reward = (
                event.confidence if s == event.s_infer else -event.confidence
            )
            q_old = float(table.q[flat])
            q_new = update_q(q_old, int(table.n[flat]), per_table_reward)
            table.q[flat] = q_new
            q_deltas[s] = q_new - q_old

        target = self.tables[event.s_real]
        delta = abs(q_deltas[event.s_real])
        target.last_delta_q = delta
        previous_action = target.last_action
        correct = event.s_infer == event.s_real
        stable = (previous_action is not None and previous_action == action) or (
            delta <= self.hp.delta_q_conv
        )
        if correct and stable:
            target.f = min(target.f + 1, self.hp.f_conv)
        else:
            target.f = 0
        target.last_action = action

        newly_converged = False
        if target.f >= self.hp.f_conv and not target.converged:
            target.converged = True
            target.converged_action = action
            newly_converged = True

        if self.t >= self.hp.budget and self.unconverged_states:
            for s in self.unconverged_states:
                table = self.tables[s]
                best = int(np.flatnonzero(table.q == table.q.max())[0])
                table.converged_action = decode_action(best, self.grid)
            self.status = STATUS_BUDGET_EXHAUSTED
        elif not self.unconverged_states:
            self.status = STATUS_CONVERGED

        self.pending_trial = None
        self.events.append(event)
        return TrialOutcome(
            t=self.t,
            state=event.s_real,
            action=action,
            s_infer=event.s_infer,
            confidence=event.confidence,
            s_check=reward_update.s_check,
            reward=reward_update.reward,
            q_deltas=q_deltas,
            f=target.f,
            newly_converged=newly_converged,
            status=self.status,
        )

    def result(self) -> dict[str, ActionId]:
        """Final state-to-action assignment, in state order."""
        if self.status == STATUS_RUNNING:
            raise SessionStateError("session still running, no result yet")
        return {s: self.tables[s].converged_action for s in self.states}


def session_summary(session: LearnerSession) -> dict:
    """Compact JSON-friendly view of a finished or in-flight session."""
    result = None
    if session.status != STATUS_RUNNING:
        result = {
            state: list(action.levels)
            for state, action in session.result().items()
        }
    return {
        "session_id": session.id,
        "status": session.status,
        "t": session.t,
        "steps": session.steps,
        "result": result,
        "tables": {
            state: {
                "f": table.f,
                "converged": table.converged,
                "converged_action": (
                    list(table.converged_action.levels)
                    if table.converged_action is not None
                    else None
                ),
            }
            for state, table in session.tables.items()
        },
    }
