"""Channel model, primary-user duty cycles, sensing, occupancy logs and
spectrum-hole selection for secondary users.

All timing is on the engine's millisecond grid; sensing sweeps every
secondary user at once on a shared grid of ``sensing_interval_s``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels, neural
from .engine import to_ms, to_s
from .errors import NegativeDuration, NoIdleChannel, TraceTooShort
from .neural import Dataset, Mlp

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Channel:
    id: int
    band_label: str = "2.4GHz"


def make_channels(n: int, band_label: str = "2.4GHz") -> list[Channel]:
    return [Channel(i, band_label) for i in range(n)]


@dataclass(frozen=True)
class PrimaryUser:
    pu_id: int
    x: float
    y: float
    channel: int
    period_s: float = 5.0
    on_fraction: float = 0.4
    phase_s: float = 0.0

    def __post_init__(self):
        if not 0 < self.on_fraction < 1:
            raise ValueError("on_fraction must be in (0, 1)")
        if not self.period_s > 0:
            raise ValueError("period_s must be > 0")

    @property
    def period_ms(self) -> int:
        return to_ms(self.period_s)

    @property
    def on_ms(self) -> int:
        return int(round(self.on_fraction * self.period_ms))

    @property
    def phase_ms(self) -> int:
        return to_ms(self.phase_s)


def pu_active(pu: PrimaryUser, t: float) -> bool:
    """ON iff ``(t + phase) mod period < on_fraction * period``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return (to_ms(t) + pu.phase_ms) % pu.period_ms < pu.on_ms


def on_since_ms(pu: PrimaryUser, t_ms: int) -> int:
    """Start of the duty cycle containing ``t_ms``."""
    return t_ms - (t_ms + pu.phase_ms) % pu.period_ms


class PuTable:
    """Column view of the primary users for the sensing kernel."""

    def __init__(self, pus: list[PrimaryUser]):
        self.pus = list(pus)
        self.xy = np.array([[p.x, p.y] for p in pus], dtype=np.float64).reshape(-1, 2)
        self.channel = np.array([p.channel for p in pus], dtype=np.int64)
        self.period = np.array([p.period_ms for p in pus], dtype=np.int64)
        self.on = np.array([p.on_ms for p in pus], dtype=np.int64)
        self.phase = np.array([p.phase_ms for p in pus], dtype=np.int64)

    def active(self, t_ms: int) -> np.ndarray:
        return ((t_ms + self.phase) % self.period < self.on).astype(np.uint8)


def place_primary_users(num_pu, num_channels, area, spectrum_cfg, rng) -> list[PrimaryUser]:
    """Static PUs on distinct home channels (wrapping when PUs outnumber channels)."""
    pus = []
    for i in range(num_pu):
        x, y = rng.uniform(0.0, area[0]), rng.uniform(0.0, area[1])
        phase = round(rng.uniform(0.0, spectrum_cfg.pu_period_s), 3)
        pus.append(PrimaryUser(i, x, y, i % num_channels, spectrum_cfg.pu_period_s,
                               spectrum_cfg.pu_on_fraction, phase))
    return pus


def sense(su_pos, t: float, pus: list[PrimaryUser], num_channels: int, range_m: float = 250.0,
          p_miss: float = 0.0, p_false: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Busy flags (uint8) per channel as seen by one secondary user."""
    table = PuTable(pus)
    busy = kernels.sense_busy(np.array([su_pos], dtype=np.float64), table.xy, table.channel,
                              table.active(to_ms(t)), float(range_m), num_channels)
    return apply_sensing_errors(busy, p_miss, p_false, [rng])[0]


def apply_sensing_errors(busy: np.ndarray, p_miss: float, p_false: float, rngs) -> np.ndarray:
    """Flip busy->idle w.p. ``p_miss`` and idle->busy w.p. ``p_false``, row ``i`` from ``rngs[i]``."""
    if p_miss <= 0 and p_false <= 0:
        return busy
    out = busy.copy()
    for i, rng in enumerate(rngs):
        u = rng.random(busy.shape[1])
        row = busy[i].astype(bool)
        out[i] = np.where(row, u >= p_miss, u < p_false)
    return out


@dataclass(frozen=True)
class ChannelFeatures:
    busy_fraction: float
    time_since_busy_s: float
    mean_idle_run_s: float

    def normalized(self, window_s: float) -> np.ndarray:
        return np.array([self.busy_fraction, self.time_since_busy_s / window_s, self.mean_idle_run_s / window_s])


def normalize_features(raw: np.ndarray, window_s: float) -> np.ndarray:
    """Rows of (busy_fraction, time_since_busy_s, mean_idle_run_s) scaled into [0, 1]."""
    out = np.array(raw, dtype=np.float64, copy=True)
    out[:, 1:] /= window_s
    return out


class OccupancyLog:
    """Sliding window of sensed samples for every channel at one node.

    Stored channel-major (``busy[c, i]``) so each channel's history is a
    contiguous slice for the feature kernel.
    """

    def __init__(self, owner: int, num_channels: int, window_s: float = 60.0, capacity: int = 1024):
        self.owner = owner
        self.num_channels = num_channels
        self.window_s = window_s
        self.window_ms = to_ms(window_s)
        self._t = np.zeros(capacity, dtype=np.int64)
        self._b = np.zeros((num_channels, capacity), dtype=np.uint8)
        self._start = 0
        self._end = 0

    def __len__(self) -> int:
        return self._end - self._start

    def record(self, t_ms: int, busy) -> None:
        if self._end > self._start and t_ms < self._t[self._end - 1]:
            raise ValueError("occupancy samples must be time-ordered")
        cutoff = t_ms - self.window_ms
        while self._start < self._end and self._t[self._start] < cutoff:
            self._start += 1
        if self._end == self._t.shape[0]:
            self._compact()
        self._t[self._end] = t_ms
        self._b[:, self._end] = busy
        self._end += 1

    def _compact(self):
        live = self._end - self._start
        cap = self._t.shape[0]
        if live * 2 > cap:
            cap *= 2
        t = np.zeros(cap, dtype=np.int64)
        b = np.zeros((self.num_channels, cap), dtype=np.uint8)
        t[:live] = self._t[self._start : self._end]
        b[:, :live] = self._b[:, self._start : self._end]
        self._t, self._b, self._start, self._end = t, b, 0, live

    def last_busy(self) -> np.ndarray | None:
        """Most recent sensed flags, or None before the first sample."""
        if self._end == self._start:
            return None
        return self._b[:, self._end - 1]

    def last_time_ms(self) -> int | None:
        return int(self._t[self._end - 1]) if self._end > self._start else None

    def samples(self, ch: int) -> list[tuple[float, bool]]:
        return [(to_s(int(t)), bool(b)) for t, b in zip(self._t[self._start : self._end], self._b[ch, self._start : self._end])]

    def raw_features(self, now_ms: int) -> np.ndarray:
        return kernels.window_features(self._t, self._b, self._start, self._end, int(now_ms), self.window_ms)


def features(log: OccupancyLog, ch: int, now: float) -> ChannelFeatures:
    row = log.raw_features(to_ms(now))[ch]
    return ChannelFeatures(float(row[0]), float(row[1]), float(row[2]))


def _idle_candidates(log: OccupancyLog, current: int | None) -> np.ndarray:
    last = log.last_busy()
    if last is None:
        raise NoIdleChannel(f"node {log.owner} has not sensed yet")
    idle = np.flatnonzero(last == 0)
    if current is not None:
        idle = idle[idle != current]
    if idle.size == 0:
        raise NoIdleChannel(f"node {log.owner}: every channel sensed busy")
    return idle


def select_channel(manager: Mlp, log: OccupancyLog, now: float, current: int | None = None) -> int:
    """Idle channel (other than ``current``) with the highest manager score; ties -> lowest id."""
    idle = _idle_candidates(log, current)
    feats = normalize_features(log.raw_features(to_ms(now))[idle], log.window_s)
    scores = manager.forward_batch(feats)[:, 0]
    return int(idle[int(np.argmax(scores))])


def select_channel_heuristic(log: OccupancyLog, now: float, current: int | None = None) -> int:
    """Baseline: the idle channel that has been quiet the longest."""
    idle = _idle_candidates(log, current)
    quiet = log.raw_features(to_ms(now))[idle, 1]
    return int(idle[int(np.argmax(quiet))])


@dataclass
class OccupancyTrace:
    """Regularly sampled busy flags: ``busy[k, i]`` for series ``k`` at ``times_ms[i]``."""

    times_ms: np.ndarray
    busy: np.ndarray

    @property
    def duration_s(self) -> float:
        if self.times_ms.size == 0:
            return 0.0
        return to_s(int(self.times_ms[-1] - self.times_ms[0]))


def warmup_trace(pus: list[PrimaryUser], points: np.ndarray, num_channels: int, range_m: float,
                 duration_s: float, interval_s: float) -> OccupancyTrace:
    """Perfect-sensing trace at static ``points``; series are (point, channel) pairs."""
    table = PuTable(pus)
    step = to_ms(interval_s)
    times = np.arange(0, to_ms(duration_s) + 1, step, dtype=np.int64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    busy = np.empty((points.shape[0] * num_channels, times.size), dtype=np.uint8)
    for i, t in enumerate(times):
        flags = kernels.sense_busy(points, table.xy, table.channel, table.active(int(t)), float(range_m), num_channels)
        busy[:, i] = flags.reshape(-1)
    return OccupancyTrace(times, busy)


def build_spectrum_trainset(trace: OccupancyTrace, window_s: float = 60.0, horizon_s: float = 5.0,
                            stride_s: float = 5.0) -> Dataset:
    """Features over the trailing window -> idle fraction over the next ``horizon_s``."""
    if trace.duration_s < 2 * window_s:
        raise TraceTooShort(f"trace covers {trace.duration_s:.3f}s, need {2 * window_s:.3f}s")
    t = trace.times_ms
    w_ms, h_ms, s_ms = to_ms(window_s), to_ms(horizon_s), to_ms(stride_s)
    xs, ys = [], []
    now = int(t[0]) + w_ms
    while now + h_ms <= t[-1]:
        end = int(np.searchsorted(t, now, side="right"))
        raw = kernels.window_features(t, trace.busy, 0, end, now, w_ms)
        fut = slice(end, int(np.searchsorted(t, now + h_ms, side="right")))
        ys.append(1.0 - trace.busy[:, fut].mean(axis=1))
        xs.append(normalize_features(raw, window_s))
        now += s_ms
    return Dataset(np.vstack(xs), np.concatenate(ys)[:, None])


def train_spectrum_manager(trainset: Dataset, train_cfg, n_hidden: int, rng) -> neural.TrainResult:
    return neural.train(Mlp.uninitialized(3, n_hidden, 1), trainset, train_cfg, rng)


@dataclass(frozen=True)
class SwitchRecord:
    su_id: int
    from_channel: int
    to_channel: int
    pu_appeared_at: float
    resumed_at: float

    @property
    def switching_time(self) -> float:
        return round(self.resumed_at - self.pu_appeared_at, 3)


def record_switch(ledger: list, su_id: int, pu_appeared_at: float, resumed_at: float,
                  from_channel: int, to_channel: int) -> SwitchRecord:
    if to_ms(resumed_at) < to_ms(pu_appeared_at):
        raise NegativeDuration(f"resumed at {resumed_at} before PU appeared at {pu_appeared_at}")
    rec = SwitchRecord(su_id, from_channel, to_channel, pu_appeared_at, resumed_at)
    ledger.append(rec)
    return rec


OPERATING, RETUNING, DEFERRED = "operating", "retuning", "deferred"


class SpectrumLayer:
    """Runs periodic sensing for every secondary user and handles handoffs.

    ``positions(t)`` returns the (N, 2) position matrix and ``position(i, t)``
    a single node's position, both for any past or present time.
    ``selector(log, now, current)`` picks the next channel.
    """

    def __init__(self, sim, num_su: int, pus: list[PrimaryUser], num_channels: int, range_m: float,
                 cfg, positions: Callable, position: Callable,
                 selector: Callable, error_rngs=None):
        self.sim = sim
        self.n = num_su
        self.pus = pus
        self.table = PuTable(pus)
        self.num_channels = num_channels
        self.range_m = float(range_m)
        self.cfg = cfg
        self.interval_ms = to_ms(cfg.sensing_interval_s)
        self.retune_ms = to_ms(cfg.retune_delay_s)
        self.positions = positions
        self.position = position
        self.selector = selector
        self.error_rngs = error_rngs
        self.logs = [OccupancyLog(i, num_channels, cfg.window_s) for i in range(num_su)]
        self.channel = [-1] * num_su
        self.mode = [DEFERRED] * num_su
        self.operating_since = [0] * num_su
        self._pending: list[tuple | None] = [None] * num_su  # (from_channel, appeared_ms | None)
        self._target = [-1] * num_su
        self.switches: list[SwitchRecord] = []
        self.tx_count = 0
        self.tx_violations = 0
        self.deferrals = 0
        self.vacates = 0
        self.false_vacates = 0
        self.sweeps = 0
        self.on_channel_change: Callable | None = None

    def start(self, until: float):
        self._until_ms = to_ms(until)
        self.sim.at_ms(0, self._sweep, kind="sense", target="spectrum")

    # ground truth for one SU on one channel, used to time PU appearances
    def _truth(self, i: int, ch: int, t_ms: int) -> bool:
        x, y = self.position(i, to_s(t_ms))
        r2 = self.range_m * self.range_m
        for p in self.pus:
            if p.channel != ch:
                continue
            if (t_ms + p.phase_ms) % p.period_ms >= p.on_ms:
                continue
            dx, dy = x - p.x, y - p.y
            if dx * dx + dy * dy <= r2:
                return True
        return False

    def _onset_ms(self, i: int, ch: int, t_ms: int) -> int:
        """Start of the busy run on ``ch`` that contains ``t_ms``, clipped to operating start."""
        floor = self.operating_since[i]
        lo = t_ms - self.interval_ms
        while lo > floor and self._truth(i, ch, lo):
            lo -= self.interval_ms
        if lo <= floor:
            return floor
        hi = t_ms
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self._truth(i, ch, mid):
                hi = mid
            else:
                lo = mid
        return hi

    def _sweep(self):
        t_ms = self.sim.now_ms
        xy = self.positions(to_s(t_ms))
        busy = kernels.sense_busy(xy, self.table.xy, self.table.channel, self.table.active(t_ms),
                                  self.range_m, self.num_channels)
        if self.error_rngs is not None:
            busy = apply_sensing_errors(busy, self.cfg.p_miss, self.cfg.p_false, self.error_rngs)
        self.sweeps += 1
        for i in range(self.n):
            self.logs[i].record(t_ms, busy[i])
            mode = self.mode[i]
            if mode == OPERATING:
                ch = self.channel[i]
                if busy[i, ch]:
                    self._vacate(i, ch, t_ms)
                else:
                    self._transmit(i, ch)
            elif mode == DEFERRED:
                self._try_select(i, t_ms)
        nxt = t_ms + self.interval_ms
        if nxt <= self._until_ms:
            self.sim.at_ms(nxt, self._sweep, kind="sense", target="spectrum")

    def _vacate(self, i: int, ch: int, t_ms: int):
        if self._truth(i, ch, t_ms):
            appeared = self._onset_ms(i, ch, t_ms)
            self.vacates += 1
        else:
            appeared = None
            self.false_vacates += 1
        self._pending[i] = (ch, appeared)
        self.channel[i] = -1
        self._try_select(i, t_ms, exclude=ch)

    def _try_select(self, i: int, t_ms: int, exclude: int | None = None):
        try:
            target = self.selector(self.logs[i], to_s(t_ms), exclude)
        except NoIdleChannel:
            self.mode[i] = DEFERRED
            self.deferrals += 1
            return
        self.mode[i] = RETUNING
        self._target[i] = target
        self.sim.at_ms(t_ms + self.retune_ms, self._resume, i, kind="resume", target=i)

    def _resume(self, i: int):
        t_ms = self.sim.now_ms
        target = self._target[i]
        last = self.logs[i].last_busy()
        if last[target]:
            # sensed busy while retuning
            self._try_select(i, t_ms, exclude=target)
            return
        self.mode[i] = OPERATING
        self.channel[i] = target
        self.operating_since[i] = t_ms
        pending = self._pending[i]
        self._pending[i] = None
        if pending is not None and pending[1] is not None:
            record_switch(self.switches, i, to_s(pending[1]), to_s(t_ms), pending[0], target)
        if self.on_channel_change is not None:
            self.on_channel_change(i, target)
        self._transmit(i, target)

    def _transmit(self, i: int, ch: int):
        self.tx_count += 1
        if self.logs[i].last_busy()[ch]:
            self.tx_violations += 1

    def unresolved(self) -> int:
        """SUs still waiting to resume after a PU appearance."""
        return sum(p is not None and p[1] is not None for p in self._pending)

    def mean_switch_time(self) -> float:
        if not self.switches:
            return 0.0
        return sum(to_ms(s.resumed_at) - to_ms(s.pu_appeared_at) for s in self.switches) / len(self.switches) / 1000.0
