"""ISAC decision and station selection for one TXOP.

Times are integer nanoseconds.  A decision first predicts the target from
the relevant memory (per interface when non-cooperative, shared when
cooperative), gates on available stations and remaining window time, picks
sense / communicate / skip, and then selects the stations.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from . import crlb, scheduler
from .config import Mode, NetworkConfig, Scheme, TimingConfig
from .kalman import Measurement, MotionModel, predict, predict_state, update
from .model import TargetState, TrackBelief
from .streams import Stream

log = logging.getLogger(__name__)


class Beta(enum.Enum):
    SENSE = 1
    COMMUNICATE = 0
    SKIP = "skip"

    def __str__(self) -> str:
        return "skip" if self is Beta.SKIP else str(self.value)


@dataclass
class PolicyMemory:
    """What an interface (or the whole AP when cooperating) remembers.

    ``last_sensing_time`` is the decision time of the last committed sensing
    TXOP and ``belief`` the updated estimate produced there.
    """

    last_sensing_time: int
    belief: TrackBelief
    sensing_count: int = 0
    window_end: int = 0

    def start_window(self, window_end: int) -> None:
        self.sensing_count = 0
        self.window_end = window_end


@dataclass(frozen=True)
class TxopContext:
    """Everything an interface sees when it gains a TXOP."""

    time: int
    link: int
    available: tuple[int, ...]
    window_end: int
    positions: np.ndarray  # (M, 2)
    ul_snr: np.ndarray  # (M,) on this link
    dl_snr: np.ndarray  # (M,) on this link
    bandwidth: float
    bytes_received: tuple[int, ...]
    backlog: tuple[int, ...]
    next_txop_time: int | None = None

    @property
    def n_stas(self) -> int:
        return len(self.ul_snr)

    @property
    def remaining(self) -> int:
        return self.window_end - self.time


@dataclass(frozen=True)
class Decision:
    beta: Beta
    time: int
    prior: TrackBelief
    model: MotionModel
    deadline: int = 0  # latest end of a communication exchange
    selection: tuple[int, ...] = ()
    granted: dict = field(default_factory=dict)
    crlb: float = float("nan")
    reason: str = ""

    @property
    def elapsed(self) -> float:
        return (self.time - self.prior.time) / 1e9

    @cached_property
    def predicted_state(self) -> TargetState:
        return predict_state(self.prior.state, self.elapsed)

    @cached_property
    def predicted_belief(self) -> TrackBelief:
        return predict(self.prior, self.elapsed, self.model)

    def skip(self, reason: str) -> "Decision":
        return Decision(Beta.SKIP, self.time, self.prior, self.model, self.deadline,
                        reason=reason)

    def with_selection(self, selection: tuple[int, ...], granted: dict | None = None,
                       crlb: float = float("nan")) -> "Decision":
        return Decision(self.beta, self.time, self.prior, self.model, self.deadline,
                        selection, {} if granted is None else granted, crlb, self.reason)


@lru_cache(maxsize=64)
def min_durations(timing: TimingConfig) -> tuple[int, int, int]:
    """Minimum sensing, communication and overall exchange durations (ns)."""
    t = timing
    sense = 3 * t.sifs + 2 * t.tf + t.cts + t.ndp
    comm = 3 * t.sifs + t.tf + t.cts + t.ndp + t.ack
    return sense, comm, max(sense, comm)


def threshold_time(last_sensing: float, window_end: float, n: int, alpha: float) -> float:
    """Time after which sensing beats communication."""
    a = alpha ** (n + 1)
    return a * last_sensing + (1.0 - a) * window_end


def _model(cfg: NetworkConfig) -> MotionModel:
    return MotionModel(cfg.process_noise_intensity, cfg.cv_offdiag)


def decide_noncoop(mem: PolicyMemory, ctx: TxopContext, cfg: NetworkConfig,
                   timing: TimingConfig) -> Decision:
    t = ctx.time
    d = Decision(Beta.SKIP, t, mem.belief, _model(cfg), deadline=ctx.window_end)
    if not ctx.available:
        return d.skip("no available stations")
    if ctx.remaining < min_durations(timing)[2]:
        return d.skip("window too short")
    t_star = threshold_time(mem.last_sensing_time, ctx.window_end, mem.sensing_count, cfg.alpha)
    beta = Beta.SENSE if len(ctx.available) >= 3 and t > t_star else Beta.COMMUNICATE
    return Decision(beta, t, mem.belief, d.model, deadline=ctx.window_end)


def decide_coop(mem: PolicyMemory, ctx: TxopContext, cfg: NetworkConfig,
                timing: TimingConfig) -> Decision:
    """Cooperative decision over the shared memory.

    The three criteria are tried in order; when none fires the TXOP is
    skipped.  The criterion-(ii) threshold override only shapes this
    decision's communication deadline and is not persisted.
    """
    t = ctx.time
    tau_s, tau_c, tau_min = min_durations(timing)
    d = Decision(Beta.SKIP, t, mem.belief, _model(cfg))
    if not ctx.available:
        return d.skip("no available stations")
    if ctx.remaining < tau_min:
        return d.skip("window too short")
    t_star = threshold_time(mem.last_sensing_time, ctx.window_end, mem.sensing_count, cfg.alpha)
    sensing_done = mem.last_sensing_time + tau_s
    t_next = ctx.next_txop_time if ctx.next_txop_time is not None else ctx.window_end
    if t <= t_star - tau_c:
        return Decision(Beta.COMMUNICATE, t, mem.belief, d.model,
                        deadline=min(int(t_star), ctx.window_end))
    if t < min(sensing_done, t_next - tau_c):
        return Decision(Beta.COMMUNICATE, t, mem.belief, d.model,
                        deadline=min(t_next, ctx.window_end))
    if t > max(t_star, sensing_done):
        return Decision(Beta.SENSE, t, mem.belief, d.model)
    return d.skip("no cooperative criterion applies")


def decide(mem: PolicyMemory, ctx: TxopContext, cfg: NetworkConfig,
           timing: TimingConfig) -> Decision:
    if cfg.mode is Mode.COOPERATIVE:
        return decide_coop(mem, ctx, cfg, timing)
    return decide_noncoop(mem, ctx, cfg, timing)


def random_subset(items, size: int, rng: Stream) -> tuple[int, ...]:
    pool = sorted(items)
    picked = [pool.pop(rng.integer(len(pool))) for _ in range(size)]
    return tuple(sorted(picked))


def random_comm_subset(avail, rng: Stream) -> tuple[int, ...]:
    """Uniform draw over all subsets of ``avail`` (the empty set included)."""
    return tuple(m for m in avail if rng.uniform() < 0.5)


def _select_sensing(dec: Decision, ctx: TxopContext, cfg: NetworkConfig,
                    timing: TimingConfig, rng: Stream) -> Decision:
    if cfg.mode is Mode.COOPERATIVE:
        # the shared view covers every station, not only the idle ones
        pool = tuple(range(ctx.n_stas))
    else:
        pool = ctx.available
    if len(pool) < 3:
        return dec.skip("fewer than three stations")
    ref = dec.predicted_state.position
    eta = timing.ltf_repetitions
    if cfg.scheme.random_sensing:
        triple = random_subset(pool, 3, rng)
        return dec.with_selection(triple)
    cands = crlb.nominate_candidates(pool, ctx.ul_snr, cfg.k)
    try:
        triple, value = crlb.select_sensing_triple(
            cands, ref, ctx.ul_snr, ctx.positions, ctx.bandwidth, eta)
    except crlb.AllDegenerate:
        log.info("t=%d link=%d: all sensing triples degenerate", ctx.time, ctx.link)
        return dec.skip("all triples degenerate")
    return dec.with_selection(triple, crlb=value)


def _select_comm(dec: Decision, ctx: TxopContext, cfg: NetworkConfig,
                 timing: TimingConfig, rng: Stream) -> Decision:
    tau_c = min_durations(timing)[1]
    avail = ctx.available
    dl = ctx.dl_snr
    ref_snr = math.fsum(dl[m] for m in avail) / len(avail)
    budget = scheduler.byte_budget(ctx.bandwidth, ref_snr, max(dec.deadline - ctx.time - tau_c, 0) / 1e9)
    if cfg.scheme.random_comm:
        chosen = random_comm_subset(avail, rng)
        order = [scheduler.CommCandidate(m, ctx.bytes_received[m], ctx.backlog[m], 1.0, 0.0)
                 for m in chosen if ctx.backlog[m] >= 1]
        if not order:
            return dec.skip("random subset has no backlog")
        sel = scheduler.fill_budget(order, budget)
    else:
        cands = scheduler.make_candidates(avail, ctx.bytes_received, ctx.backlog)
        if not cands:
            return dec.skip("no backlog")
        sel = scheduler.select_comm_stas(cands, budget)
    return dec.with_selection(tuple(sel.order), dict(sel.granted))


def select_for_decision(dec: Decision, ctx: TxopContext, cfg: NetworkConfig,
                        timing: TimingConfig, rng: Stream) -> Decision:
    if dec.beta is Beta.SENSE:
        return _select_sensing(dec, ctx, cfg, timing, rng)
    if dec.beta is Beta.COMMUNICATE:
        return _select_comm(dec, ctx, cfg, timing, rng)
    return dec


def commit_sensing(mem: PolicyMemory, predicted: TrackBelief, meas: Measurement,
                   t: int) -> PolicyMemory:
    """Fold a completed sensing measurement into the memory (in place)."""
    updated = update(predicted, meas)
    mem.belief = replace(updated, time=t)
    mem.last_sensing_time = t
    mem.sensing_count += 1
    return mem
