"""Weighted proportional-fair DL scheduling and fairness metrics.

Stations are weighted by ``exp(-z)`` of the z-scored bytes they have already
received, then served greedily by weighted log-utility per byte until the
byte budget is exhausted.  ``log`` is the natural log throughout; the base
only rescales the objective and leaves orderings and argmaxes unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

MAX_EXACT = 20


class CommCandidate(NamedTuple):
    id: int
    bytes_received: int
    backlog: int
    weight: float
    utility_per_byte: float


@dataclass
class CommSelection:
    """Greedy result: ids in service order with granted bytes."""

    order: list[int] = field(default_factory=list)
    granted: dict[int, int] = field(default_factory=dict)
    remaining: int = 0

    @property
    def total_bytes(self) -> int:
        return sum(self.granted.values())


def zscore(values: Sequence[float]) -> list[float]:
    if len(values) == 0:
        raise ValueError("zscore of an empty list")
    n = len(values)
    mean = math.fsum(values) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)
    if sd == 0:
        return [0.0] * n
    return [(v - mean) / sd for v in values]


def weight(z: float) -> float:
    return math.exp(-z)


def utility_per_byte(w: float, backlog: float) -> float:
    if backlog < 1:
        raise ValueError("backlog below one byte is not eligible")
    return w * math.log(backlog) / backlog


def byte_budget(bandwidth: float, ref_snr: float, time_budget: float) -> int:
    """Shannon-Hartley byte capacity in ``time_budget`` seconds."""
    if time_budget < 0:
        raise ValueError("negative time budget")
    return int(math.floor(bandwidth * math.log2(1.0 + ref_snr) * time_budget / 8.0))


def make_candidates(ids: Sequence[int], bytes_received: Mapping[int, int] | Sequence[int],
                    backlog: Mapping[int, int] | Sequence[int]) -> list[CommCandidate]:
    """Weight every available station; drop those with an empty backlog.

    The z-score is taken over all of ``ids`` before the eligibility filter.
    """
    z = zscore([bytes_received[m] for m in ids])
    out = []
    exp, log = math.exp, math.log
    for m, zm in zip(ids, z):
        bx = backlog[m]
        if bx < 1:
            continue
        w = exp(-zm)
        out.append(CommCandidate(m, bytes_received[m], bx, w, w * log(bx) / bx))
    return out


def greedy_order(candidates: Iterable[CommCandidate]) -> list[CommCandidate]:
    return sorted(candidates, key=lambda c: (-c.utility_per_byte, c.id))


def fill_budget(order: Iterable[CommCandidate], limit: int) -> CommSelection:
    """Add stations in ``order``, subtracting each backlog from the budget.

    The station whose addition drives the budget negative is kept, granted
    only what was left before it, and the loop stops.
    """
    sel = CommSelection(remaining=limit)
    for c in order:
        before = sel.remaining
        sel.order.append(c.id)
        sel.remaining -= c.backlog
        if sel.remaining < 0:
            sel.granted[c.id] = max(before, 0)
            break
        sel.granted[c.id] = c.backlog
    return sel


def select_comm_stas(candidates: Sequence[CommCandidate], limit: int) -> CommSelection:
    if not candidates:
        raise ValueError("no communication candidates")
    return fill_budget(greedy_order(candidates), limit)


def weighted_pf_objective(selection: Iterable[int], weights: Mapping[int, float],
                          backlogs: Mapping[int, float]) -> float:
    return float(sum(weights[m] * math.log(backlogs[m]) for m in selection))


def exact_knapsack(candidates: Sequence[CommCandidate], limit: int) -> tuple[tuple[int, ...], float]:
    """Brute-force optimum of the weighted-PF knapsack (test oracle).

    No overflow item is allowed: the selected backlogs must fit ``limit``.
    """
    n = len(candidates)
    if n > MAX_EXACT:
        raise ValueError(f"exact_knapsack is capped at {MAX_EXACT} candidates")
    best: tuple[int, ...] = ()
    best_val = 0.0
    utils = [c.weight * math.log(c.backlog) for c in candidates]
    for mask in range(1 << n):
        size = 0
        val = 0.0
        for j in range(n):
            if mask >> j & 1:
                size += candidates[j].backlog
                val += utils[j]
        if size <= limit and val > best_val:
            best_val = val
            best = tuple(candidates[j].id for j in range(n) if mask >> j & 1)
    return best, best_val


def jain_index(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise ValueError("jain_index of an empty list")
    arr = np.asarray(values, dtype=float)
    sq = float((arr * arr).sum())
    if sq == 0:
        return 1.0
    return float(arr.sum() ** 2 / (len(arr) * sq))
