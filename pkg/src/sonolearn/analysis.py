"""Cohort aggregation: step summaries, cross-pair rank statistics,
final-parameter heatmaps, and raw trial export for external regression."""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import eventlog
from .grid import ParameterGrid

COHORT_FILE = "cohort.json"

MODE_UNINFORMED = "uninformed"
MODE_INFORMED = "informed"
MODES = (MODE_UNINFORMED, MODE_INFORMED)


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one learning run within a cohort."""

    run_id: str
    condition: str
    init_mode: str
    steps: int
    converged: bool
    status: str
    final: dict[str, tuple[int, ...]]
    log: Path | None = None
    events: tuple | None = None  # in-memory trial records, kept out of JSON

    def to_json(self) -> dict:
        return {
            "run_id": self.run_id,
            "condition": self.condition,
            "init_mode": self.init_mode,
            "steps": self.steps,
            "converged": self.converged,
            "status": self.status,
            "final": {s: list(levels) for s, levels in self.final.items()},
            "log": str(self.log) if self.log is not None else None,
        }


@dataclass
class CohortResult:
    """All runs of a simulated cohort plus the shared grid/config."""

    grid: ParameterGrid
    states: tuple[str, ...]
    runs: list[RunRecord]
    config: dict = field(default_factory=dict)

    def steps_for(self, init_mode: str, condition: str | None = None) -> list[int]:
        return [
            r.steps
            for r in self.runs
            if r.init_mode == init_mode and (condition is None or r.condition == condition)
        ]

    def conditions(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.runs:
            seen.setdefault(r.condition, None)
        return tuple(seen)


def load_cohort(directory: str | Path) -> CohortResult:
    directory = Path(directory)
    cohort_path = directory / COHORT_FILE
    if not cohort_path.is_file():
        raise FileNotFoundError(f"no {COHORT_FILE} in {directory}")
    data = json.loads(cohort_path.read_text())
    runs = [
        RunRecord(
            run_id=r["run_id"],
            condition=r["condition"],
            init_mode=r["init_mode"],
            steps=int(r["steps"]),
            converged=bool(r["converged"]),
            status=r["status"],
            final={s: tuple(levels) for s, levels in r["final"].items()},
            log=directory / r["log"] if r.get("log") else None,
        )
        for r in data["runs"]
    ]
    return CohortResult(
        grid=ParameterGrid.from_json(data["grid"]),
        states=tuple(data["states"]),
        runs=runs,
        config=data.get("config", {}),
    )


def steps_summary(cohort: CohortResult) -> dict:
    """Per-init-mode mean / median / min / max of steps to completion."""
    if not cohort.runs:
        raise ValueError("cohort is empty")
    summary: dict[str, dict] = {}
    for mode in sorted({r.init_mode for r in cohort.runs}):
        steps = cohort.steps_for(mode)
        summary[mode] = {
            "count": len(steps),
            "mean": statistics.fmean(steps),
            "median": statistics.median(steps),
            "min": min(steps),
            "max": max(steps),
        }
    return summary


@dataclass(frozen=True)
class RankedPairResult:
    ranked_sum: float
    p_value: float
    n: int
    m: int

    @property
    def max_sum(self) -> int:
        return self.n * self.m

    def to_json(self) -> dict:
        return {
            "ranked_sum": self.ranked_sum,
            "max_sum": self.max_sum,
            "p_value": self.p_value,
            "n": self.n,
            "m": self.m,
        }


def _normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _tie_correction(values: Sequence[float]) -> float:
    ordered = sorted(values)
    total = len(ordered)
    tie_sum = 0
    run = 1
    for prev, cur in zip(ordered, ordered[1:]):
        if cur == prev:
            run += 1
        else:
            tie_sum += run**3 - run
            run = 1
    tie_sum += run**3 - run
    return 1.0 - tie_sum / (total**3 - total)


@lru_cache(maxsize=None)
def _exact_count(n: int, m: int, u: int) -> int:
    # arrangements of n reference and m compared values with cross-pair sum u
    if u < 0:
        return 0
    if n == 0 or m == 0:
        return 1 if u == 0 else 0
    return _exact_count(n - 1, m, u - m) + _exact_count(n, m - 1, u)


def ranked_pair_statistic(
    reference: Sequence[float],
    compared: Sequence[float],
    *,
    method: str = "normal",
) -> RankedPairResult:
    """Cross-pair dominance count with a two-sided p-value.

    ranked_sum counts, over all n*m (reference, compared) pairs, 1 for each
    compared value above the reference value and 0.5 for each exact tie;
    its maximum is n*m. The "normal" method uses the tie-corrected,
    continuity-corrected normal approximation of the null distribution;
    "exact" enumerates the tie-free null exactly (n*m <= 400 recommended).
    """
    ref = np.asarray(reference, dtype=np.float64)
    cmp_ = np.asarray(compared, dtype=np.float64)
    if ref.size == 0 or cmp_.size == 0:
        raise ValueError("both datasets must be non-empty")
    n, m = int(ref.size), int(cmp_.size)
    greater = (cmp_[None, :] > ref[:, None]).sum()
    equal = (cmp_[None, :] == ref[:, None]).sum()
    ranked_sum = float(greater) + 0.5 * float(equal)

    if method == "exact":
        if equal or len(set(ref.tolist()) | set(cmp_.tolist())) != n + m:
            raise ValueError("exact method requires tie-free data; use method='normal'")
        total = math.comb(n + m, n)
        u = int(ranked_sum)
        low = sum(_exact_count(n, m, k) for k in range(0, u + 1))
        high = sum(_exact_count(n, m, k) for k in range(u, n * m + 1))
        p_value = min(1.0, 2.0 * min(low, high) / total)
        return RankedPairResult(ranked_sum=ranked_sum, p_value=p_value, n=n, m=m)
    if method != "normal":
        raise ValueError(f"unknown method {method!r}, expected 'normal' or 'exact'")

    mean = n * m / 2.0
    correction = _tie_correction(list(ref) + list(cmp_))
    sd = math.sqrt(n * m * (n + m + 1) / 12.0 * correction)
    if sd == 0.0:
        return RankedPairResult(ranked_sum=ranked_sum, p_value=1.0, n=n, m=m)
    shift = abs(ranked_sum - mean)
    z = max(0.0, shift - 0.5) / sd
    p_value = min(1.0, 2.0 * _normal_sf(z))
    return RankedPairResult(ranked_sum=ranked_sum, p_value=p_value, n=n, m=m)


@dataclass
class HeatmapGrid:
    """Run counts over the action lattice, per (state, init mode)."""

    grid: ParameterGrid
    states: tuple[str, ...]
    modes: tuple[str, ...]
    counts: dict[tuple[str, str], np.ndarray]

    def to_json(self) -> dict:
        return {
            "axes": [
                {"name": name, "levels": list(levels)}
                for name, levels in self.grid.parameters
            ],
            "states": list(self.states),
            "modes": list(self.modes),
            "counts": {
                state: {
                    mode: self.counts[(state, mode)].tolist() for mode in self.modes
                }
                for state in self.states
            },
        }


def heatmap(cohort: CohortResult) -> HeatmapGrid:
    """Count, per (state, init mode), where each run's final action landed."""
    if not cohort.runs:
        raise ValueError("cohort is empty")
    modes = tuple(sorted({r.init_mode for r in cohort.runs}))
    sizes = cohort.grid.sizes
    counts = {
        (state, mode): np.zeros(sizes, dtype=np.int64)
        for state in cohort.states
        for mode in modes
    }
    for run in cohort.runs:
        for state in cohort.states:
            if state not in run.final:
                raise ValueError(f"run {run.run_id} has no final action for state {state!r}")
            levels = run.final[state]
            if len(levels) != len(sizes) or any(
                not 0 <= idx < size for idx, size in zip(levels, sizes)
            ):
                raise ValueError(
                    f"run {run.run_id} final action {levels} does not fit the cohort grid "
                    f"{sizes} (mixed grids?)"
                )
            counts[(state, run.init_mode)][tuple(levels)] += 1
    return HeatmapGrid(grid=cohort.grid, states=cohort.states, modes=modes, counts=counts)


def trial_rows(cohort: CohortResult) -> tuple[list[str], list[list]]:
    """Flatten every logged trial into CSV-ready rows.

    Columns: run_id, condition, init_mode, t, state, one <param>_level
    column per grid parameter, s_infer, confidence, reward, correct (1/0).
    """
    header = (
        ["run_id", "condition", "init_mode", "t", "state"]
        + [f"{name}_level" for name in cohort.grid.names]
        + ["s_infer", "confidence", "reward", "correct"]
    )
    rows: list[list] = []
    for run in cohort.runs:
        if run.events is not None:
            events = [eventlog.event_record(ev) for ev in run.events]
        elif run.log is not None:
            _, records, _ = eventlog.read_log(run.log)
            events = [r for r in records if r.get("type") == "feedback"]
        else:
            raise ValueError(f"run {run.run_id} has neither events nor a log file")
        for ev in events:
            correct = 1 if ev["s_infer"] == ev["s_real"] else 0
            reward = ev["confidence"] if correct else -ev["confidence"]
            rows.append(
                [run.run_id, run.condition, run.init_mode, ev["t"], ev["s_real"]]
                + list(ev["action"])
                + [ev["s_infer"], ev["confidence"], reward, correct]
            )
    return header, rows


def export_trials_csv(cohort: CohortResult, path: str | Path) -> Path:
    if not cohort.runs:
        raise ValueError("cohort is empty")
    header, rows = trial_rows(cohort)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def analyze_cohort(directory: str | Path, out_dir: str | Path | None = None) -> dict[str, Path]:
    """Produce the summary, rank-statistic, heatmap, and trial files."""
    directory = Path(directory)
    out = Path(out_dir) if out_dir is not None else directory
    out.mkdir(parents=True, exist_ok=True)
    cohort = load_cohort(directory)

    paths: dict[str, Path] = {}

    summary = steps_summary(cohort)
    paths["steps_summary"] = out / "steps_summary.json"
    paths["steps_summary"].write_text(json.dumps(summary, indent=2) + "\n")

    stats = []
    scopes = [None, *cohort.conditions()]
    for condition in scopes:
        informed = cohort.steps_for(MODE_INFORMED, condition)
        uninformed = cohort.steps_for(MODE_UNINFORMED, condition)
        if not informed or not uninformed:
            continue
        result = ranked_pair_statistic(informed, uninformed)
        stats.append(
            {
                "condition": condition or "all",
                "reference": MODE_INFORMED,
                "compared": MODE_UNINFORMED,
                **result.to_json(),
            }
        )
    paths["ranked_stats"] = out / "ranked_stats.json"
    paths["ranked_stats"].write_text(json.dumps(stats, indent=2) + "\n")

    paths["heatmap"] = out / "heatmap.json"
    paths["heatmap"].write_text(json.dumps(heatmap(cohort).to_json(), indent=2) + "\n")

    paths["trials"] = export_trials_csv(cohort, out / "trials.csv")
    return paths
