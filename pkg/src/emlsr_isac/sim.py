"""Deterministic discrete-event simulation of ISAC over an EMLSR AP MLD.

One run places the AP and stations, then walks an event queue of TXOP
grants, exchange completions and window boundaries.  Every TXOP decision
samples the squared position error of the prediction it was made with.

Trace lines have the fixed column order::

    time_ns,kind,interface,beta,selection,metric

``kind`` is ``TxopGained``, ``ExchangeEnd`` or ``WindowEnd``; ``beta`` is
``1`` (sense), ``0`` (communicate) or ``skip``; ``selection`` joins station
ids with ``|``; ``metric`` is the squared position error (m^2) for TXOP
decisions.  Station and interface ids are 0-based.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import crlb
from .config import Mode, NetworkConfig, TimingConfig
from .kalman import MotionModel, _cv_noise_factor, initial_belief, synthesize_measurement
from .model import TargetState
from .policy import (Beta, Decision, PolicyMemory, TxopContext, commit_sensing, decide,
                     min_durations, select_for_decision)
from .scheduler import jain_index
from .streams import RunStreams, Stream

D_MIN = 0.1
THERMAL_NOISE_DBM_HZ = -174.0

TXOP, EXCHANGE_END, WINDOW_END = "TxopGained", "ExchangeEnd", "WindowEnd"
# same-time ordering: boundaries first, then completions, then grants
_KIND_RANK = {WINDOW_END: 0, EXCHANGE_END: 1, TXOP: 2}


class SimulationError(RuntimeError):
    """An internal invariant broke; the message names the event index."""


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def fspl_db(distance: float, freq: float) -> float:
    d = max(distance, D_MIN)
    return 20.0 * math.log10(d) + 20.0 * math.log10(freq) - 147.55


def snr_model(ap_pos, sta_pos, link: int, cfg: NetworkConfig) -> tuple[float, float]:
    """Static (UL, DL) linear SNR of one station on one link.

    Free-space path loss, thermal noise plus noise figure over the link
    bandwidth, and a fixed array gain of ``n_tx * n_rx``.
    """
    d = math.hypot(ap_pos[0] - sta_pos[0], ap_pos[1] - sta_pos[1])
    loss = fspl_db(d, cfg.carrier_freq[link])
    noise = THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(cfg.bandwidth[link]) + cfg.noise_figure
    gain = 10.0 * math.log10(cfg.mimo[0] * cfg.mimo[1])
    ul = cfg.sta_tx_power + gain - loss - noise
    dl = cfg.ap_tx_power + gain - loss - noise
    return db_to_linear(ul), db_to_linear(dl)


def contention_next_txop(now: int, timing: TimingConfig, rng: Stream) -> int:
    """DIFS plus a uniform backoff of 0..cw slots."""
    return now + timing.difs + rng.integer(timing.cw + 1) * timing.slot


class TrafficSource:
    """Constant-rate DL arrivals with the fractional byte carried over."""

    def __init__(self, rate_bps: float):
        self.rate = int(round(rate_bps))
        self._carry = 0  # bit-nanoseconds not yet turned into bytes

    def accrue(self, elapsed_ns: int) -> int:
        if elapsed_ns < 0:
            raise ValueError("negative elapsed time")
        self._carry += self.rate * elapsed_ns
        whole, self._carry = divmod(self._carry, 8_000_000_000)
        return whole


def traffic_arrival(rate_bps: float, elapsed: float) -> int:
    """Bytes arriving in ``elapsed`` seconds (single accrual, no carry)."""
    if elapsed < 0:
        raise ValueError("negative elapsed time")
    return int(math.floor(rate_bps * elapsed / 8.0))


def shannon_rate(bandwidth: float, snr: float) -> float:
    return bandwidth * math.log2(1.0 + snr)


def exchange_duration(decision: Decision, dl_rates, timing: TimingConfig,
                      deadline: int | None = None) -> tuple[int, dict[int, int]]:
    """Duration (ns) of the frame exchange and the bytes actually sent.

    Sensing always costs the minimum sensing time.  Communication costs the
    minimum communication time plus each station's payload at its own rate,
    served one after another; with a ``deadline`` the payloads are cut so
    the exchange ends by then.
    """
    tau_s, tau_c, _ = min_durations(timing)
    if decision.beta is Beta.SENSE:
        return tau_s, {}
    if decision.beta is not Beta.COMMUNICATE:
        raise ValueError("skip decisions have no exchange")
    spare = None if deadline is None else deadline - decision.time - tau_c
    used = 0
    sent: dict[int, int] = {}
    for m in decision.selection:
        b = decision.granted.get(m, 0)
        rate = dl_rates[m]
        if spare is not None:
            b = min(b, int((spare - used) * rate // 8e9))
            b = max(b, 0)
        used += math.ceil(b * 8e9 / rate) if b else 0
        sent[m] = b
    return tau_c + used, sent


@dataclass
class RunMetrics:
    mse_samples: list[float] = field(default_factory=list)
    delivered_bytes: list[int] = field(default_factory=list)
    arrived_bytes: list[int] = field(default_factory=list)
    sim_time: float = 0.0
    sensing_count: int = 0
    comm_count: int = 0
    skip_count: int = 0
    trace: list[str] | None = None

    @property
    def mse_mean(self) -> float:
        return float(np.mean(self.mse_samples)) if self.mse_samples else float("nan")

    @property
    def throughput(self) -> float:
        return 8.0 * sum(self.delivered_bytes) / self.sim_time

    @property
    def jain(self) -> float:
        return jain_index(self.delivered_bytes)

    @property
    def sensing_per_window(self) -> float:
        return self.sensing_count / max(self.n_windows, 1)

    n_windows: int = 0


@dataclass
class _Interface:
    busy_until: int = -1
    pending: int | None = None  # time of the scheduled TXOP


class Simulation:
    """One run.  Construct, then call :meth:`run` once."""

    def __init__(self, cfg: NetworkConfig, timing: TimingConfig, seed: int | None = None,
                 record_trace: bool = False):
        self.cfg = cfg
        self.timing = timing
        self.seed = cfg.seed if seed is None else seed
        self.streams = RunStreams(self.seed)
        self.model = MotionModel(cfg.process_noise_intensity, cfg.cv_offdiag)
        self.tau_s, self.tau_c, self.tau_min = min_durations(timing)
        M, L = cfg.n_stas, cfg.n_links

        gen = self.streams.placement.gen
        a = cfg.arena_half_width
        self.ap_pos = tuple(gen.uniform(-a, a, size=2).tolist())
        self.positions = gen.uniform(-a, a, size=(M, 2))
        self.ul_snr = np.empty((L, M))
        self.dl_snr = np.empty((L, M))
        for l in range(L):
            for m in range(M):
                self.ul_snr[l, m], self.dl_snr[l, m] = snr_model(self.ap_pos, self.positions[m], l, cfg)
        self._ul_rows = [self.ul_snr[l].tolist() for l in range(L)]
        self._dl_rows = [self.dl_snr[l].tolist() for l in range(L)]
        self.dl_rate = [[shannon_rate(cfg.bandwidth[l], self.dl_snr[l, m]) for m in range(M)]
                        for l in range(L)]

        heading = 2.0 * math.pi * self.streams.motion.uniform()
        start = TargetState(0.0, math.cos(heading), 0.0, math.sin(heading))
        self._truth = [start.x, start.vx, start.y, start.vy]
        self.truth_time = 0
        belief = initial_belief(start)
        n_mem = 1 if cfg.mode is Mode.COOPERATIVE else L
        self.memories = [PolicyMemory(0, belief, 0, timing.window) for _ in range(n_mem)]

        self.sta_busy = [-1] * M
        self.bytes_received = [0] * M
        self.backlog = [0] * M
        self.arrived = [0] * M
        self.traffic = TrafficSource(cfg.dl_arrival_rate)
        self.traffic_time = 0
        self.ifaces = [_Interface() for _ in range(L)]
        self.window_end = timing.window
        self.metrics = RunMetrics(trace=[] if record_trace else None,
                                  n_windows=timing.n_windows,
                                  sim_time=timing.n_windows * timing.window / 1e9)
        self._difs, self._slot, self._cw1 = timing.difs, timing.slot, timing.cw + 1
        self._draw_u = self.streams.contention.uniform
        self._queue: list = []
        self._seq = 0
        self._last_time = 0
        self._n_events = 0

    # -- event plumbing ----------------------------------------------------

    def _push(self, time: int, kind: str, link: int = -1) -> None:
        heapq.heappush(self._queue, (time, _KIND_RANK[kind], self._seq, kind, link))
        self._seq += 1

    def _schedule_contention(self, l: int, now: int) -> None:
        t = now + self._difs + int(self._draw_u() * self._cw1) * self._slot
        iface = self.ifaces[l]
        if t > self.window_end - self.tau_min:
            iface.pending = None  # idle until the next window starts
            return
        iface.pending = t
        self._push(t, TXOP, l)

    def _memory(self, l: int) -> PolicyMemory:
        return self.memories[0] if self.cfg.mode is Mode.COOPERATIVE else self.memories[l]

    def _trace(self, line: str) -> None:
        if self.metrics.trace is not None:
            self.metrics.trace.append(line)

    def _fail(self, msg: str) -> None:
        raise SimulationError(f"event #{self._n_events} at t={self._last_time} ns: {msg}")

    # -- state updates -----------------------------------------------------

    def _accrue(self, t: int) -> None:
        add = self.traffic.accrue(t - self.traffic_time)
        self.traffic_time = t
        if add:
            for m in range(len(self.backlog)):
                self.backlog[m] += add
                self.arrived[m] += add

    @property
    def truth(self) -> TargetState:
        return TargetState(*self._truth)

    def _advance_truth(self, t: int) -> None:
        # same draws and arithmetic as kalman.propagate_truth, on bare floats
        if t == self.truth_time:
            return
        dt = (t - self.truth_time) / 1e9
        l00, l10, l11 = _cv_noise_factor(dt, self.model.g_s)
        normal = self.streams.motion.normal
        a0 = normal()
        a1 = normal()
        b0 = normal()
        b1 = normal()
        x, vx, y, vy = self._truth
        self._truth = [x + dt * vx + l00 * a0, vx + l10 * a0 + l11 * a1,
                       y + dt * vy + l00 * b0, vy + l10 * b0 + l11 * b1]
        self.truth_time = t

    def available(self, t: int) -> tuple[int, ...]:
        """Stations not engaged in any exchange on any link at ``t``."""
        return tuple(m for m, b in enumerate(self.sta_busy) if b < t)

    def _next_txop_after(self, l: int, t: int) -> int:
        best = None
        for j, iface in enumerate(self.ifaces):
            if j == l:
                continue
            if iface.pending is not None and iface.pending >= t:
                cand = iface.pending
            elif iface.busy_until > t:
                cand = iface.busy_until + self.timing.difs
            else:
                continue
            best = cand if best is None else min(best, cand)
        return self.window_end if best is None else best

    def _record_error(self, t: int, l: int, px: float, py: float, beta: Beta, selection) -> None:
        tr = self._truth
        err = (px - tr[0]) ** 2 + (py - tr[2]) ** 2
        if not math.isfinite(err):
            self._fail("non-finite position error")
        self.metrics.mse_samples.append(err)
        if self.metrics.trace is not None:
            sel = "|".join(map(str, selection))
            self.metrics.trace.append(f"{t},{TXOP},{l},{beta},{sel},{err!r}")

    # -- event handlers ----------------------------------------------------

    def _on_txop(self, t: int, l: int) -> None:
        cfg = self.cfg
        iface = self.ifaces[l]
        iface.pending = None
        self._advance_truth(t)
        mem = self._memory(l)
        avail = self.available(t)
        if not avail:
            # nobody listening: the decision is a skip whatever the policy
            st = mem.belief.state
            dt = (t - mem.belief.time) / 1e9
            self._record_error(t, l, st.x + dt * st.vx, st.y + dt * st.vy, Beta.SKIP, ())
            self.metrics.skip_count += 1
            self._schedule_contention(l, t)
            return
        self._accrue(t)
        ctx = TxopContext(
            time=t, link=l, available=avail, window_end=self.window_end,
            positions=self.positions, ul_snr=self._ul_rows[l], dl_snr=self._dl_rows[l],
            bandwidth=cfg.bandwidth[l], bytes_received=tuple(self.bytes_received),
            backlog=tuple(self.backlog),
            next_txop_time=self._next_txop_after(l, t) if cfg.mode is Mode.COOPERATIVE else None,
        )
        dec = decide(mem, ctx, cfg, self.timing)
        if dec.beta is Beta.SENSE and cfg.mode is Mode.COOPERATIVE and len(avail) < cfg.n_stas:
            # a cooperative triple may involve any station; wait until all are idle
            dec = dec.skip("cooperative sensing deferred: stations busy")
        dec = select_for_decision(dec, ctx, cfg, self.timing, self.streams.selection)

        pred = dec.predicted_state
        self._record_error(t, l, pred.x, pred.y, dec.beta, dec.selection)

        if dec.beta is Beta.SKIP:
            self.metrics.skip_count += 1
            self._schedule_contention(l, t)
            return
        for m in dec.selection:
            if self.sta_busy[m] >= t:
                self._fail(f"station {m} selected while busy")

        if dec.beta is Beta.SENSE:
            end = t + self.tau_s
            sel = list(dec.selection)
            truth = self.truth
            var = crlb.measurement_variance(
                self.positions[sel], self.ul_snr[l, sel], truth.position,
                pred.position, cfg.bandwidth[l], self.timing.ltf_repetitions)
            meas = synthesize_measurement(truth, var, self.streams.measurement)
            commit_sensing(mem, dec.predicted_belief, meas, t)
            self.metrics.sensing_count += 1
        else:
            duration, sent = exchange_duration(dec, self.dl_rate[l], self.timing, dec.deadline)
            end = t + duration
            for m, b in sent.items():
                self.backlog[m] -= b
                self.bytes_received[m] += b
            self.metrics.comm_count += 1
        if end > self.window_end:
            self._fail("exchange crosses the window boundary")
        for m in dec.selection:
            self.sta_busy[m] = end
        iface.busy_until = end
        self._push(end, EXCHANGE_END, l)

    def _on_exchange_end(self, t: int, l: int) -> None:
        self._trace(f"{t},{EXCHANGE_END},{l},,,")
        self._schedule_contention(l, t)

    def _on_window_end(self, t: int) -> bool:
        self._trace(f"{t},{WINDOW_END},,,,")
        if t >= self.timing.n_windows * self.timing.window:
            return False
        self.window_end = t + self.timing.window
        for mem in self.memories:
            mem.start_window(self.window_end)
        for l, iface in enumerate(self.ifaces):
            if iface.pending is None and iface.busy_until <= t:
                self._schedule_contention(l, t)
        return True

    # -- main loop ---------------------------------------------------------

    def run(self) -> RunMetrics:
        for l in range(self.cfg.n_links):
            self._schedule_contention(l, 0)
        self._push(self.window_end, WINDOW_END)
        while self._queue:
            t, _, _, kind, l = heapq.heappop(self._queue)
            if t < self._last_time:
                self._fail("event time went backwards")
            self._last_time = t
            self._n_events += 1
            if kind == TXOP:
                self._on_txop(t, l)
            elif kind == EXCHANGE_END:
                self._on_exchange_end(t, l)
            elif not self._on_window_end(t):
                break
            else:
                self._push(self.window_end, WINDOW_END)
        end = self.timing.n_windows * self.timing.window
        self._accrue(end)
        m = self.metrics
        m.delivered_bytes = list(self.bytes_received)
        m.arrived_bytes = list(self.arrived)
        for d, a in zip(m.delivered_bytes, m.arrived_bytes):
            if d > a:
                self._fail("delivered more bytes than arrived")
        return m


def run(cfg: NetworkConfig, timing: TimingConfig, seed: int | None = None,
        record_trace: bool = False) -> RunMetrics:
    """Simulate ``timing.n_windows`` windows and return the metrics."""
    return Simulation(cfg, timing, seed, record_trace).run()
