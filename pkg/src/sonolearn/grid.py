"""Discretized parameter grids and mixed-radix action indexing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

DEFAULT_STATES = ("Stuck", "Accomplished", "Progressing")


@dataclass(frozen=True)
class ActionId:
    """One cell of a parameter grid.

    ``levels`` holds one level index per grid parameter; ``flat`` is the
    mixed-radix encoding of those indices (first parameter most
    significant).
    """

    levels: tuple[int, ...]
    flat: int


@dataclass(frozen=True)
class ParameterGrid:
    """Ordered set of named parameters, each discretized into labelled levels.

    The cartesian product of the levels is the action space. Actions are
    numbered 0..action_count-1 in mixed radix.
    """

    parameters: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        if not self.parameters:
            raise ValueError("grid needs at least one parameter")
        names = [name for name, _ in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {names}")
        for name, levels in self.parameters:
            if len(levels) < 2:
                raise ValueError(
                    f"parameter {name!r} needs at least 2 levels, got {len(levels)}"
                )

    @classmethod
    def from_levels(cls, pairs: Iterable[tuple[str, Sequence[object]]]) -> "ParameterGrid":
        """Build a grid from (name, levels) pairs, stringifying level labels."""
        return cls(
            tuple((name, tuple(str(v) for v in levels)) for name, levels in pairs)
        )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.parameters)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(levels) for _, levels in self.parameters)

    @property
    def action_count(self) -> int:
        count = 1
        for size in self.sizes:
            count *= size
        return count

    def actions(self) -> Iterator[ActionId]:
        for flat in range(self.action_count):
            yield decode_action(flat, self)

    def to_json(self) -> list[dict]:
        return [{"name": name, "levels": list(levels)} for name, levels in self.parameters]

    @classmethod
    def from_json(cls, obj: list[dict]) -> "ParameterGrid":
        return cls(tuple((p["name"], tuple(p["levels"])) for p in obj))


def encode_action(level_indices: Sequence[int], grid: ParameterGrid) -> ActionId:
    """Map per-parameter level indices to their ActionId (mixed radix)."""
    indices = tuple(int(i) for i in level_indices)
    if len(indices) != len(grid.parameters):
        raise ValueError(
            f"expected {len(grid.parameters)} level indices, got {len(indices)}"
        )
    flat = 0
    for idx, (name, levels) in zip(indices, grid.parameters):
        if not 0 <= idx < len(levels):
            raise ValueError(
                f"level index {idx} out of range for parameter {name!r} "
                f"(valid 0..{len(levels) - 1})"
            )
        flat = flat * len(levels) + idx
    return ActionId(indices, flat)


def decode_action(flat_index: int, grid: ParameterGrid) -> ActionId:
    """Map a flat action index back to per-parameter level indices."""
    flat = int(flat_index)
    if not 0 <= flat < grid.action_count:
        raise ValueError(
            f"flat index {flat} out of range [0, {grid.action_count})"
        )
    remainder = flat
    reversed_indices = []
    for size in reversed(grid.sizes):
        reversed_indices.append(remainder % size)
        remainder //= size
    return ActionId(tuple(reversed(reversed_indices)), flat)
