from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from sonolearn.grid import ParameterGrid, decode_action, encode_action


def grid_3x3x3():
    return ParameterGrid.from_levels(
        [("bpm", [100, 140, 180]), ("bpl", [1, 2, 4]), ("pitch", [-4, 0, 4])]
    )


class TestEncodeDecode:
    def test_origin(self):
        assert encode_action([0, 0, 0], grid_3x3x3()).flat == 0

    def test_maximum(self):
        assert encode_action([2, 2, 2], grid_3x3x3()).flat == 26

    def test_hand_computed_mixed_radix(self):
        # 1*9 + 2*3 + 0 = 15, first parameter most significant
        action = encode_action([1, 2, 0], grid_3x3x3())
        assert action.flat == 15
        assert decode_action(15, grid_3x3x3()).levels == (1, 2, 0)

    def test_round_trip_all_actions(self):
        grid = grid_3x3x3()
        for flat in range(grid.action_count):
            action = decode_action(flat, grid)
            assert encode_action(action.levels, grid) == action

    @given(
        sizes=st.lists(st.integers(min_value=2, max_value=5), min_size=1, max_size=4),
        data=st.data(),
    )
    def test_round_trip_random_grids(self, sizes, data):
        grid = ParameterGrid.from_levels(
            [(f"p{i}", list(range(size))) for i, size in enumerate(sizes)]
        )
        levels = tuple(
            data.draw(st.integers(min_value=0, max_value=size - 1)) for size in sizes
        )
        action = encode_action(levels, grid)
        assert decode_action(action.flat, grid).levels == levels

    def test_out_of_range_index_names_parameter(self):
        with pytest.raises(ValueError, match="'bpl'"):
            encode_action([0, 3, 0], grid_3x3x3())

    def test_wrong_arity(self):
        with pytest.raises(ValueError, match="expected 3"):
            encode_action([0, 0], grid_3x3x3())

    def test_flat_out_of_range(self):
        with pytest.raises(ValueError, match="27"):
            decode_action(27, grid_3x3x3())
        with pytest.raises(ValueError):
            decode_action(-1, grid_3x3x3())


class TestGridInvariants:
    def test_action_count_is_product(self):
        assert grid_3x3x3().action_count == 27
        small = ParameterGrid.from_levels([("a", [0, 1]), ("b", [0, 1, 2])])
        assert small.action_count == 6

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ParameterGrid.from_levels([("a", [0, 1]), ("a", [0, 1])])

    def test_single_level_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            ParameterGrid.from_levels([("a", [0])])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ParameterGrid(parameters=())

    def test_json_round_trip(self):
        grid = grid_3x3x3()
        assert ParameterGrid.from_json(grid.to_json()) == grid
