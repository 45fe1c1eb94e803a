"""Shared test helpers."""

from __future__ import annotations

import re

from sonolearn.grid import DEFAULT_STATES

CANONICAL_FILE = re.compile(r"bpm\d+_bpl\d+_pitch\d+")

FORBIDDEN_KEYS = {
    "s_real", "real_state", "true_state", "correct", "reward", "s_check",
    "action", "levels", "bpm", "bpl", "pitch", "pitch_bend", "file", "mode",
}


def scan_blind(payload, *, allow_state_values_under=("state_options",)):
    """Fail if a participant-facing payload leaks the hidden state or the
    current sound's parameters."""

    def walk(node, key_path):
        if isinstance(node, dict):
            for key, value in node.items():
                assert key not in FORBIDDEN_KEYS, f"forbidden key {key!r} in {key_path}"
                walk(value, key_path + (key,))
        elif isinstance(node, (list, tuple)):
            for item in node:
                walk(item, key_path)
        elif isinstance(node, str):
            assert not CANONICAL_FILE.search(node), f"file name leaked at {key_path}: {node}"
            if node in DEFAULT_STATES:
                assert any(k in key_path for k in allow_state_values_under), (
                    f"state name {node!r} leaked at {key_path}"
                )

    walk(payload, ())
