"""Per-subsystem random streams derived from the single run seed.

Each subsystem gets its own counter-based Philox generator keyed by
``(seed, subsystem id)`` so that draws in one subsystem never shift the
sequence seen by another.  Draws are served from pre-filled blocks because
the simulator asks for scalars in its hot loop.
"""

from __future__ import annotations

import numpy as np

SUBSYSTEMS = {
    "placement": 0,
    "motion": 1,
    "measurement": 2,
    "contention": 3,
    "traffic": 4,
    "selection": 5,
}

_BLOCK = 1024


def generator(seed: int, subsystem: str) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(SUBSYSTEMS[subsystem],))
    return np.random.Generator(np.random.Philox(ss))


class Stream:
    """Blocked scalar draws on top of a numpy Generator."""

    def __init__(self, seed: int, subsystem: str):
        self.gen = generator(seed, subsystem)
        self._normals: list[float] = []
        self._uniforms: list[float] = []

    def normal(self) -> float:
        if not self._normals:
            self._normals = self.gen.standard_normal(_BLOCK).tolist()
            self._normals.reverse()
        return self._normals.pop()

    def uniform(self) -> float:
        """Uniform draw on [0, 1)."""
        if not self._uniforms:
            self._uniforms = self.gen.random(_BLOCK).tolist()
            self._uniforms.reverse()
        return self._uniforms.pop()

    def integer(self, n: int) -> int:
        """Uniform integer on ``0..n-1``."""
        return min(int(self.uniform() * n), n - 1)


class RunStreams:
    """All streams of one run."""

    def __init__(self, seed: int):
        self.seed = seed
        self.placement = Stream(seed, "placement")
        self.motion = Stream(seed, "motion")
        self.measurement = Stream(seed, "measurement")
        self.contention = Stream(seed, "contention")
        self.selection = Stream(seed, "selection")
