from __future__ import annotations

import pytest

from sonolearn.sound import (
    LevelMapping,
    RenderConfig,
    default_base_sample,
    generate_library,
)


@pytest.fixture(scope="session")
def level_mapping():
    return LevelMapping()


@pytest.fixture(scope="session")
def acoustic_grid(level_mapping):
    return level_mapping.grid()


@pytest.fixture(scope="session")
def default_library(tmp_path_factory, level_mapping, acoustic_grid):
    """A fully rendered 27-sound library, shared across test modules."""
    root = tmp_path_factory.mktemp("libraries") / "default"
    base = default_base_sample()
    return generate_library(
        base, acoustic_grid, level_mapping, RenderConfig(), root, library_id="default"
    )
