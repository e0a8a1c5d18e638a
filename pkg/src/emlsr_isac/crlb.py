"""CRLB metrics for range and trilateration, and sensing-triple selection.

The Fisher information of a triple is ``G diag(rho) G^T`` where the columns
of ``G`` are unit vectors from each station toward the reference position
and ``rho_j = bandwidth^2 * snr_j / mu`` is the inverse range CRLB.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
D_MIN = 0.1
DEGENERACY_TOL = 1e-12


class DegenerateGeometry(ValueError):
    """The triple's Fisher information is (numerically) rank deficient."""


class AllDegenerate(ValueError):
    """Every candidate triple is degenerate."""


def mu_constant(eta: int) -> float:
    if eta < 1:
        raise ValueError("eta must be >= 1")
    return 3.0 * SPEED_OF_LIGHT**2 / (8.0 * math.pi**2 * eta)


def range_crlb(ul_snr: float, bandwidth: float, eta: int) -> float:
    """Variance bound (m^2) of one AP-station range estimate."""
    if not ul_snr > 0:
        raise ValueError("SNR must be positive")
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    return mu_constant(eta) / (bandwidth**2 * ul_snr)


@dataclass(frozen=True)
class SensingGeometry:
    ref_pos: tuple[float, float]
    positions: tuple[tuple[float, float], ...]
    ul_snrs: tuple[float, ...]
    bandwidth: float
    eta: int

    def __post_init__(self) -> None:
        if len(self.positions) != 3 or len(self.ul_snrs) != 3:
            raise ValueError("trilateration uses exactly three stations")


def unit_vector(ref_pos, sta_pos) -> tuple[float, float]:
    """Direction from the station toward ``ref_pos``.

    Distances below ``D_MIN`` are clamped, which shortens the vector but
    keeps its direction.
    """
    dx = ref_pos[0] - sta_pos[0]
    dy = ref_pos[1] - sta_pos[1]
    d = max(math.hypot(dx, dy), D_MIN)
    return dx / d, dy / d


def fisher_info(geom: SensingGeometry) -> np.ndarray:
    mu = mu_constant(geom.eta)
    a = b = c = 0.0
    for pos, snr in zip(geom.positions, geom.ul_snrs):
        gx, gy = unit_vector(geom.ref_pos, pos)
        rho = geom.bandwidth**2 * snr / mu
        a += gx * gx * rho
        b += gx * gy * rho
        c += gy * gy * rho
    if a * c - b * b <= DEGENERACY_TOL * (a + c) ** 2:
        raise DegenerateGeometry("stations and reference point are collinear")
    return np.array([[a, b], [b, c]])


def predicted_trilat_crlb(geom: SensingGeometry) -> float:
    """Trace of the inverse Fisher information (m^2)."""
    psi = fisher_info(geom)
    det = psi[0, 0] * psi[1, 1] - psi[0, 1] * psi[1, 0]
    return (psi[0, 0] + psi[1, 1]) / det


def theorem1_bound(ul_snrs: Sequence[float], bandwidth: float, eta: int) -> float:
    """Lower bound on every triple's trilateration CRLB.

    Uses the largest three-station SNR sum, i.e. the sum of the top three.
    """
    if len(ul_snrs) < 3:
        raise ValueError("need at least three candidate stations")
    best = sum(sorted(ul_snrs, reverse=True)[:3])
    return 4.0 * mu_constant(eta) / (bandwidth**2 * best)


def nominate_candidates(avail: Sequence[int], ul_snr, k: int) -> tuple[int, ...]:
    """Keep the ``k`` available stations with highest UL SNR.

    ``ul_snr`` is indexed by station id.  Ties go to the lower id.  The
    result is sorted by id.
    """
    if not avail:
        raise ValueError("no available stations")
    if len(avail) <= k:
        return tuple(sorted(avail))
    ranked = sorted(avail, key=lambda m: (-ul_snr[m], m))
    return tuple(sorted(ranked[:k]))


@lru_cache(maxsize=None)
def _triples(n: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), 3)), dtype=np.intp).reshape(-1, 3)


def triple_crlbs(candidates: Sequence[int], ref_pos, ul_snr, positions,
                 bandwidth: float, eta: int) -> tuple[np.ndarray, np.ndarray]:
    """Trilateration CRLB of every 3-subset of ``candidates``.

    Returns ``(triples, values)`` with triples in lexicographic order of the
    sorted candidate ids; degenerate triples get ``inf``.
    """
    cand = np.array(sorted(candidates), dtype=np.intp)
    pos = np.asarray(positions, dtype=float)[cand]
    snr = np.asarray(ul_snr, dtype=float)[cand]
    diff = np.asarray(ref_pos, dtype=float) - pos
    d = np.maximum(np.hypot(diff[:, 0], diff[:, 1]), D_MIN)
    g = diff / d[:, None]
    rho = bandwidth**2 * snr / mu_constant(eta)
    idx = _triples(len(cand))
    gx = g[idx, 0]
    gy = g[idx, 1]
    r = rho[idx]
    a = (gx * gx * r).sum(axis=1)
    b = (gx * gy * r).sum(axis=1)
    c = (gy * gy * r).sum(axis=1)
    tr = a + c
    det = a * c - b * b
    ok = det > DEGENERACY_TOL * tr * tr
    values = np.full(len(idx), np.inf)
    values[ok] = tr[ok] / det[ok]
    return cand[idx], values


def select_sensing_triple(candidates: Sequence[int], ref_pos, ul_snr, positions,
                          bandwidth: float, eta: int) -> tuple[tuple[int, int, int], float]:
    """Exhaustive argmin of the predicted trilateration CRLB over 3-subsets.

    Ties resolve to the lexicographically smallest id triple.

    Raises:
        AllDegenerate: no candidate triple can trilaterate.
    """
    if len(candidates) < 3:
        raise ValueError("need at least three candidates")
    triples, values = triple_crlbs(candidates, ref_pos, ul_snr, positions, bandwidth, eta)
    best = int(np.argmin(values))
    if not math.isfinite(values[best]):
        raise AllDegenerate("every candidate triple is degenerate")
    t = triples[best]
    return (int(t[0]), int(t[1]), int(t[2])), float(values[best])


def measurement_variance(positions, ul_snrs, true_pos, pred_pos,
                         bandwidth: float, eta: int) -> float:
    """Per-coordinate noise variance of a trilateration fix.

    The fix is modelled as an efficient estimator, so the two coordinate
    variances sum to the CRLB at the true target position.  Falls back to the
    predicted position when the true geometry is degenerate.
    """
    positions = tuple(tuple(p) for p in positions)
    snrs = tuple(ul_snrs)
    for ref in (true_pos, pred_pos):
        try:
            geom = SensingGeometry(tuple(ref), positions, snrs, bandwidth, eta)
            return predicted_trilat_crlb(geom) / 2.0
        except DegenerateGeometry:
            continue
    raise AllDegenerate("triple is degenerate at both true and predicted position")
