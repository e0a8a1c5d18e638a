"""Domain value types shared by the tracking, selection and simulation code."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TargetState:
    """Kinematic state ``[x, vx, y, vy]`` in metres and metres per second."""

    x: float
    vx: float
    y: float
    vy: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.x + self.vx + self.y + self.vy):
            raise ValueError(f"non-finite target state {self}")

    @classmethod
    def from_vector(cls, v) -> "TargetState":
        return cls(float(v[0]), float(v[1]), float(v[2]), float(v[3]))

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.vx, self.y, self.vy])

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


class BeliefKind(enum.Enum):
    PREDICTED = "predicted"
    UPDATED = "updated"


@dataclass(frozen=True)
class TrackBelief:
    """Filtered state estimate with its 4x4 MSE matrix.

    ``time`` is the simulation time (ns) the estimate refers to.
    """

    state: TargetState
    mse: np.ndarray
    kind: BeliefKind
    time: int = 0

    def __post_init__(self) -> None:
        mse = np.array(self.mse, dtype=float)
        if mse.shape != (4, 4):
            raise ValueError("mse must be 4x4")
        mse.setflags(write=False)
        object.__setattr__(self, "mse", mse)

    def is_consistent(self, tol: float = 1e-9) -> bool:
        """Symmetric and PSD to within ``tol`` relative to the trace."""
        m = self.mse
        scale = max(abs(np.trace(m)), 1e-300)
        if np.max(np.abs(m - m.T)) > tol * scale:
            return False
        return bool(np.min(np.linalg.eigvalsh(0.5 * (m + m.T))) >= -tol * scale)


@dataclass
class StaRecord:
    """Per-station state held by the simulator.

    SNRs are linear ratios indexed by link.  Byte counters are integers.
    """

    id: int
    pos: tuple[float, float]
    ul_snr: tuple[float, ...]
    dl_snr: tuple[float, ...]
    bytes_received: int = 0
    backlog: int = 0

    def __post_init__(self) -> None:
        if min(self.ul_snr) <= 0 or min(self.dl_snr) <= 0:
            raise ValueError("SNRs must be strictly positive")
        if self.bytes_received < 0 or self.backlog < 0:
            raise ValueError("byte counters must be non-negative")
