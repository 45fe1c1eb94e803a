"""Parameterized audio-loop synthesis and library generation.

A loop is assembled by placing a short base sample at every beat of a
bpm/bpl tempo frame, sweeping a pitch ramp across the whole loop through
variable-rate linear-interpolation resampling, and peak-normalizing the
result. One 16-bit mono WAV file is rendered per grid action, with a JSON
manifest binding action indices to file names.
"""

from __future__ import annotations

import hashlib
import json
import math
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import ActionId, ParameterGrid

PEAK_MINUS_1DBFS = 10.0 ** (-1.0 / 20.0)
MANIFEST_NAME = "manifest.json"

DEFAULT_BPM_LEVELS = (100.0, 140.0, 180.0)
DEFAULT_BPL_LEVELS = (1, 2, 4)
DEFAULT_PITCH_LEVELS = (-4.0, 0.0, 4.0)


@dataclass(frozen=True)
class BaseSample:
    """Mono PCM buffer (floats in [-1, 1]) with its sample rate."""

    pcm: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        pcm = np.asarray(self.pcm, dtype=np.float64)
        object.__setattr__(self, "pcm", pcm)
        if pcm.ndim != 1 or pcm.size == 0:
            raise ValueError("base sample must be a non-empty mono buffer")
        if np.abs(pcm).max() > 1.0 + 1e-9:
            raise ValueError("base sample must be normalized to [-1, 1]")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.pcm.size / self.sample_rate


@dataclass(frozen=True)
class AcousticParams:
    """Physical values behind one grid cell: tempo, repeats, pitch sweep."""

    bpm: float
    bpl: int
    pitch_bend: float

    def __post_init__(self) -> None:
        if self.bpm <= 0:
            raise ValueError(f"bpm must be positive, got {self.bpm}")
        if self.bpl < 1:
            raise ValueError(f"bpl must be >= 1, got {self.bpl}")


def _level_label(value: float) -> str:
    v = float(value)
    return str(int(v)) if v.is_integer() else str(v)


@dataclass(frozen=True)
class LevelMapping:
    """Physical values for each bpm / bpl / pitch level index."""

    bpm_levels: tuple[float, ...] = DEFAULT_BPM_LEVELS
    bpl_levels: tuple[int, ...] = DEFAULT_BPL_LEVELS
    pitch_levels: tuple[float, ...] = DEFAULT_PITCH_LEVELS

    def __post_init__(self) -> None:
        object.__setattr__(self, "bpm_levels", tuple(float(v) for v in self.bpm_levels))
        object.__setattr__(self, "bpl_levels", tuple(int(v) for v in self.bpl_levels))
        object.__setattr__(self, "pitch_levels", tuple(float(v) for v in self.pitch_levels))
        for name, levels in (
            ("bpm", self.bpm_levels),
            ("bpl", self.bpl_levels),
            ("pitch", self.pitch_levels),
        ):
            if len(levels) < 2:
                raise ValueError(f"{name} needs at least 2 levels")
            if any(b <= a for a, b in zip(levels, levels[1:])):
                raise ValueError(f"{name} levels must be strictly increasing: {levels}")
        if self.bpm_levels[0] <= 0:
            raise ValueError("bpm levels must be positive")
        if self.bpl_levels[0] < 1:
            raise ValueError("bpl levels must be >= 1")

    def grid(self) -> ParameterGrid:
        return ParameterGrid.from_levels(
            [
                ("bpm", [_level_label(v) for v in self.bpm_levels]),
                ("bpl", [_level_label(v) for v in self.bpl_levels]),
                ("pitch", [_level_label(v) for v in self.pitch_levels]),
            ]
        )

    def params_for(self, action: ActionId) -> AcousticParams:
        i, j, k = action.levels
        return AcousticParams(
            bpm=self.bpm_levels[i],
            bpl=self.bpl_levels[j],
            pitch_bend=self.pitch_levels[k],
        )

    def to_dict(self) -> dict:
        return {
            "bpm": list(self.bpm_levels),
            "bpl": list(self.bpl_levels),
            "pitch": list(self.pitch_levels),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LevelMapping":
        return cls(
            bpm_levels=tuple(obj["bpm"]),
            bpl_levels=tuple(obj["bpl"]),
            pitch_levels=tuple(obj["pitch"]),
        )


@dataclass(frozen=True)
class RenderConfig:
    sample_rate: int = 44100
    bit_depth: int = 16
    peak: float = PEAK_MINUS_1DBFS

    def __post_init__(self) -> None:
        if self.bit_depth != 16:
            raise ValueError("only 16-bit output is supported")
        if not 0 < self.peak <= 1.0:
            raise ValueError(f"peak must be in (0, 1], got {self.peak}")

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "bit_depth": self.bit_depth,
            "peak": self.peak,
        }


@dataclass
class SoundLibrary:
    """Rendered loop set: one file per action, bound by the manifest."""

    id: str
    grid: ParameterGrid
    level_mapping: LevelMapping
    render_config: RenderConfig
    files: tuple[str, ...]  # indexed by flat action index
    hashes: tuple[str, ...]
    root: Path

    def file_for(self, action: ActionId) -> str:
        return self.files[action.flat]

    def path_for(self, action: ActionId) -> Path:
        return self.root / self.files[action.flat]


def default_base_sample(sample_rate: int = 44100) -> BaseSample:
    """Synthetic beep: 880 Hz decaying sine, 120 ms."""
    n = int(round(0.120 * sample_rate))
    t = np.arange(n) / sample_rate
    pcm = np.sin(2.0 * math.pi * 880.0 * t) * np.exp(-t / 0.030)
    return BaseSample(pcm=pcm, sample_rate=sample_rate)


def assemble_loop(base: BaseSample, bpm: float, bpl: int, sample_rate: int) -> np.ndarray:
    """Place the base sample at each of bpl evenly spaced beat onsets.

    The loop lasts bpl * 60 / bpm seconds (to the nearest sample).
    """
    if base.sample_rate != sample_rate:
        raise ValueError(
            f"base sample rate {base.sample_rate} does not match render rate {sample_rate}"
        )
    beat = 60.0 / bpm
    if base.duration > beat + 0.5 / sample_rate:
        raise ValueError(
            f"base sample ({base.duration:.4f} s) is longer than the "
            f"{beat:.4f} s beat interval at bpm={_level_label(bpm)}, bpl={bpl}"
        )
    n_loop = int(round(bpl * beat * sample_rate))
    out = np.zeros(n_loop)
    for b in range(bpl):
        start = int(round(b * beat * sample_rate))
        stop = min(start + base.pcm.size, n_loop)
        out[start:stop] += base.pcm[: stop - start]
    return out


def bend_read_positions(n: int, semitones: float) -> np.ndarray:
    """Input read position per output sample for a 0..semitones linear sweep.

    The instantaneous read rate is 2 ** (ramp / 12), so position increments
    are monotone in the sweep direction.
    """
    ramp = np.linspace(0.0, semitones, n)
    ratio = 2.0 ** (ramp / 12.0)
    positions = np.empty(n)
    positions[0] = 0.0
    np.cumsum(ratio[:-1], out=positions[1:])
    return positions


def pitch_ramp_resample(buf: np.ndarray, semitones: float) -> np.ndarray:
    """Sweep the pitch of a buffer from 0 to `semitones` across its length.

    Output length equals input length. A rising sweep consumes the input
    early and pads the tail with silence; a falling sweep leaves the input
    tail unread. A zero sweep returns the buffer unchanged.
    """
    if semitones == 0.0:
        return buf.copy()
    n = buf.size
    if n < 2:
        return buf.copy()
    positions = bend_read_positions(n, semitones)
    i0 = np.floor(positions).astype(np.int64)
    in_range = positions <= n - 1
    i0 = np.clip(i0, 0, n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = positions - i0
    out = buf[i0] * (1.0 - frac) + buf[i1] * frac
    out[~in_range] = 0.0
    return out


def normalize_peak(buf: np.ndarray, peak: float) -> np.ndarray:
    top = np.abs(buf).max()
    if top == 0.0:
        return buf.copy()
    return buf * (peak / top)


def render_loop(base: BaseSample, params: AcousticParams, config: RenderConfig) -> np.ndarray:
    """Full pipeline: assemble beats, sweep pitch, peak-normalize."""
    loop = assemble_loop(base, params.bpm, params.bpl, config.sample_rate)
    bent = pitch_ramp_resample(loop, params.pitch_bend)
    return normalize_peak(bent, config.peak)


def quantize16(pcm: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(pcm * 32767.0), -32768, 32767).astype("<i2")


def write_wav(path: str | Path, pcm: np.ndarray, sample_rate: int) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(quantize16(pcm).tobytes())


def read_wav(path: str | Path) -> BaseSample:
    with wave.open(str(path), "rb") as fh:
        if fh.getnchannels() != 1:
            raise ValueError(f"{path}: only mono WAV input is supported")
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM WAV input is supported")
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return BaseSample(pcm=pcm, sample_rate=rate)


def canonical_name(action: ActionId) -> str:
    i, j, k = action.levels
    return f"bpm{i}_bpl{j}_pitch{k}.wav"


def _check_grid_matches(grid: ParameterGrid, mapping: LevelMapping) -> None:
    expected = mapping.grid()
    if grid.names != expected.names or grid.sizes != expected.sizes:
        raise ValueError(
            f"grid {grid.names}/{grid.sizes} does not match the level mapping "
            f"{expected.names}/{expected.sizes}"
        )


def generate_library(
    base: BaseSample,
    grid: ParameterGrid,
    level_mapping: LevelMapping,
    config: RenderConfig,
    output_dir: str | Path,
    *,
    library_id: str = "default",
) -> SoundLibrary:
    """Render one WAV per action and write the manifest last.

    Re-running with identical inputs rewrites identical bytes.
    """
    _check_grid_matches(grid, level_mapping)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []
    hashes: list[str] = []
    for action in grid.actions():
        params = level_mapping.params_for(action)
        name = canonical_name(action)
        try:
            pcm = render_loop(base, params, config)
            write_wav(out / name, pcm, config.sample_rate)
        except OSError as exc:
            raise OSError(f"while rendering {name} (action {action.levels}): {exc}") from exc
        files.append(name)
        hashes.append(hashlib.sha256((out / name).read_bytes()).hexdigest())
    library = SoundLibrary(
        id=library_id,
        grid=grid,
        level_mapping=level_mapping,
        render_config=config,
        files=tuple(files),
        hashes=tuple(hashes),
        root=out,
    )
    manifest_tmp = out / (MANIFEST_NAME + ".tmp")
    manifest_tmp.write_text(json.dumps(manifest_dict(library), indent=2) + "\n")
    manifest_tmp.replace(out / MANIFEST_NAME)
    return library


def manifest_dict(library: SoundLibrary) -> dict:
    return {
        "id": library.id,
        "version": 1,
        "grid": library.grid.to_json(),
        "level_mapping": library.level_mapping.to_dict(),
        "render_config": library.render_config.to_dict(),
        "actions": [
            {
                "flat": flat,
                "levels": list(action.levels),
                "file": library.files[flat],
                "sha256": library.hashes[flat],
            }
            for flat, action in enumerate(library.grid.actions())
        ],
    }


def load_library(directory: str | Path) -> SoundLibrary:
    """Read a manifest back into a SoundLibrary, checking completeness."""
    root = Path(directory)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no {MANIFEST_NAME} in {root}")
    data = json.loads(manifest_path.read_text())
    grid = ParameterGrid.from_json(data["grid"])
    actions = data["actions"]
    if len(actions) != grid.action_count:
        raise ValueError(
            f"{manifest_path}: manifest lists {len(actions)} actions, "
            f"grid has {grid.action_count}"
        )
    files = [""] * grid.action_count
    hashes = [""] * grid.action_count
    for entry in actions:
        files[entry["flat"]] = entry["file"]
        hashes[entry["flat"]] = entry["sha256"]
    if "" in files or len(set(files)) != len(files):
        raise ValueError(f"{manifest_path}: manifest does not cover every action exactly once")
    return SoundLibrary(
        id=data["id"],
        grid=grid,
        level_mapping=LevelMapping.from_dict(data["level_mapping"]),
        render_config=RenderConfig(**data["render_config"]),
        files=tuple(files),
        hashes=tuple(hashes),
        root=root,
    )


def mapping_from_counts(counts: Sequence[int]) -> LevelMapping:
    """Level mapping using the first N default values per parameter.

    Supports shrunken grids like 2,2,2 without a custom mapping file.
    """
    if len(counts) != 3:
        raise ValueError(f"expected 3 level counts (bpm, bpl, pitch), got {list(counts)}")
    defaults = (DEFAULT_BPM_LEVELS, DEFAULT_BPL_LEVELS, DEFAULT_PITCH_LEVELS)
    taken = []
    for want, have in zip(counts, defaults):
        if not 2 <= want <= len(have):
            raise ValueError(
                f"level count must be within 2..{len(have)} for defaults, got {want}"
            )
        taken.append(have[:want])
    return LevelMapping(bpm_levels=taken[0], bpl_levels=taken[1], pitch_levels=taken[2])
