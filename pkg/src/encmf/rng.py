"""Labelled, counter-keyed random streams.

Every draw in a run comes from a generator keyed by
``(master seed, label, *counters)`` -- e.g. ``("forecast-noise", step)``.
Streams with different keys are independent, so changing how one part of a
run consumes randomness never perturbs another (the synthesized truth does
not depend on which filter is run).
"""
from __future__ import annotations

import zlib

import numpy as np

LABELS = (
    "truth-init",
    "obs-noise",
    "ensemble-init",
    "forecast-noise",
    "split",
    "aug-noise",
    "train-shuffle",
    "net-init",
)


def _label_key(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


class RngPolicy:
    """Factory of reproducible Philox streams.

    ``issued`` records every key handed out, which lets tests check that
    no two consumers share a stream.
    """

    def __init__(self, seed: int, track: bool = False):
        self.seed = int(seed)
        self.track = track
        self.issued: list[tuple] = []

    def stream(self, label: str, *counters: int) -> np.random.Generator:
        key = (_label_key(label),) + tuple(int(c) for c in counters)
        if self.track:
            self.issued.append((label,) + key[1:])
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))

    def child_seed(self, index: int) -> int:
        """Deterministic seed for sweep point ``index`` (index 0 keeps the master seed)."""
        return self.seed + int(index)
