"""Site sensors, context aggregation and ANN disaster classification.

A site carries ``sensors_per_kind`` sensors of each kind in
:data:`~crahnsim.config.SENSOR_KINDS`. Sensor ids are kind-major, so
aggregating into five groups recovers one group per sensor kind and
coarser groupings mix kinds together.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

from . import neural
from .config import DISASTER_CLASSES, SENSOR_KINDS, DetectionConfig
from .errors import DimensionMismatch, TooFewReadings
from .neural import Dataset, Mlp, TrainConfig, TrainResult

log = logging.getLogger(__name__)


class DisasterClass(IntEnum):
    NONE = 0
    FIRE = 1
    EARTHQUAKE = 2
    FLOOD = 3

    @property
    def label(self) -> str:
        return DISASTER_CLASSES[self.value]

    @classmethod
    def from_label(cls, label: str) -> "DisasterClass":
        return cls(DISASTER_CLASSES.index(label))


@dataclass(frozen=True)
class SensorReading:
    sensor_id: int
    kind: str
    value: float
    at: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"sensor value {self.value} outside [0, 1]")
        if self.kind not in SENSOR_KINDS:
            raise ValueError(f"unknown sensor kind {self.kind!r}")


@dataclass(frozen=True)
class ContextSnapshot:
    site_id: int
    groups: tuple
    at: float = 0.0


@dataclass(frozen=True)
class DisasterVerdict:
    cls: DisasterClass
    scores: tuple
    at: float = 0.0


@dataclass(frozen=True)
class GroundTruthEvent:
    cls: DisasterClass
    start: float
    duration: float

    def __post_init__(self):
        if self.cls == DisasterClass.NONE:
            raise ValueError("ground-truth events must be a disaster class")
        if not self.duration > 0:
            raise ValueError("event duration must be > 0")

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class GeneratorConfig:
    signatures: dict
    sigma: float = 0.05
    samples_per_class: int = 100
    sensors_per_kind: int = 4
    n_groups: int = 5

    @classmethod
    def from_detection(cls, d: DetectionConfig) -> "GeneratorConfig":
        return cls(dict(d.signatures), d.sigma, d.samples_per_class, d.sensors_per_kind, d.n_inputs)

    def signature_matrix(self) -> np.ndarray:
        return np.array([self.signatures[c] for c in DISASTER_CLASSES], dtype=np.float64)


def _group_bounds(total: int, n: int) -> list[tuple[int, int]]:
    # contiguous, sizes differ by at most one, larger groups first
    q, r = divmod(total, n)
    bounds, lo = [], 0
    for g in range(n):
        hi = lo + q + (1 if g < r else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def group_means(values: np.ndarray, n: int) -> np.ndarray:
    """Row-wise means over ``n`` contiguous column groups of ``values``."""
    values = np.atleast_2d(values)
    return np.stack([values[:, lo:hi].mean(axis=1) for lo, hi in _group_bounds(values.shape[1], n)], axis=1)


def aggregate(readings: Sequence[SensorReading], n: int, site_id: int = 0, at: float | None = None) -> ContextSnapshot:
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(readings) < n:
        raise TooFewReadings(f"{len(readings)} readings cannot fill {n} groups")
    ordered = sorted(readings, key=lambda r: r.sensor_id)
    values = np.array([[r.value for r in ordered]])
    groups = tuple(float(v) for v in group_means(values, n)[0])
    when = max(r.at for r in ordered) if at is None else at
    return ContextSnapshot(site_id, groups, when)


def _raw_values(cls_idx: np.ndarray, gen: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    sig = np.repeat(gen.signature_matrix(), gen.sensors_per_kind, axis=1)[cls_idx]
    if gen.sigma > 0:
        sig = sig + rng.normal(0.0, gen.sigma, sig.shape)
    return np.clip(sig, 0.0, 1.0)


def site_readings(cls: DisasterClass, gen: GeneratorConfig, rng: np.random.Generator, at: float = 0.0) -> list[SensorReading]:
    values = _raw_values(np.array([int(cls)]), gen, rng)[0]
    m = gen.sensors_per_kind
    return [SensorReading(i, SENSOR_KINDS[i // m], float(v), at) for i, v in enumerate(values)]


def synth_dataset(gen: GeneratorConfig, rng: np.random.Generator) -> Dataset:
    """Balanced one-hot dataset, classes interleaved ``none, fire, ...``."""
    k = len(DISASTER_CLASSES)
    labels = np.tile(np.arange(k), gen.samples_per_class)
    inputs = group_means(_raw_values(labels, gen, rng), gen.n_groups)
    return Dataset(inputs, np.eye(k)[labels])


def classify(detector: Mlp, ctx: ContextSnapshot) -> DisasterVerdict:
    if len(ctx.groups) != detector.n_in:
        raise DimensionMismatch(f"snapshot has {len(ctx.groups)} groups, detector expects {detector.n_in}")
    scores = neural.forward(detector, ctx.groups)
    # argmax takes the first maximum: ties resolve to none, then lowest index
    return DisasterVerdict(DisasterClass(int(np.argmax(scores))), tuple(float(s) for s in scores), ctx.at)


def predict_classes(detector: Mlp, inputs: np.ndarray) -> np.ndarray:
    return np.argmax(detector.forward_batch(inputs), axis=1)


def held_out_rates(detector: Mlp, data: Dataset) -> dict:
    """Sample-level accuracy and false negative / positive rates."""
    pred = predict_classes(detector, data.inputs)
    truth = np.argmax(data.targets, axis=1)
    disaster = truth != DisasterClass.NONE
    quiet = ~disaster
    return {
        "accuracy": float(np.mean(pred == truth)),
        "false_negative_rate": float(np.mean(pred[disaster] == DisasterClass.NONE)) if disaster.any() else 0.0,
        "false_positive_rate": float(np.mean(pred[quiet] != DisasterClass.NONE)) if quiet.any() else 0.0,
    }


def false_negative_rate(truth: Sequence[GroundTruthEvent], verdicts: Sequence[DisasterVerdict]) -> float:
    """Fraction of events with no non-none verdict inside ``[start, start+duration]``."""
    if not truth:
        return 0.0
    alarms = sorted(v.at for v in verdicts if v.cls != DisasterClass.NONE)
    missed = 0
    for ev in truth:
        i = bisect.bisect_left(alarms, ev.start)
        if i == len(alarms) or alarms[i] > ev.end:
            missed += 1
    return missed / len(truth)


def false_positive_rate(truth: Sequence[GroundTruthEvent], verdicts: Sequence[DisasterVerdict]) -> float:
    """Fraction of verdicts outside every event window that still raised an alarm."""
    quiet = [v for v in verdicts if not any(ev.start <= v.at <= ev.end for ev in truth)]
    if not quiet:
        return 0.0
    return sum(v.cls != DisasterClass.NONE for v in quiet) / len(quiet)


def train_detector(gen: GeneratorConfig, train_cfg: TrainConfig, n_hidden: int, rng: np.random.Generator) -> tuple[TrainResult, Dataset]:
    data = synth_dataset(gen, rng)
    net = Mlp.uninitialized(gen.n_groups, n_hidden, len(DISASTER_CLASSES))
    return neural.train(net, data, train_cfg, rng), data


def schedule_disasters(horizon: float, gap_s, duration_s, rng: np.random.Generator) -> list[GroundTruthEvent]:
    """Non-overlapping disaster events that all end inside ``horizon``."""
    events = []
    t = 0.0
    while True:
        start = round(t + rng.uniform(*gap_s), 3)
        duration = round(rng.uniform(*duration_s), 3)
        cls = DisasterClass(int(rng.integers(1, len(DISASTER_CLASSES))))
        if start + duration > horizon:
            return events
        events.append(GroundTruthEvent(cls, start, duration))
        t = start + duration


class ContextManager:
    """Snapshots the site every ``interval`` seconds and classifies it.

    ``on_alarm`` fires on the rising edge of a disaster verdict (first
    non-none verdict after a none verdict), so one disaster episode starts
    one escalation rather than one per snapshot.
    """

    def __init__(self, sim, detector: Mlp, gen: GeneratorConfig, truth: Sequence[GroundTruthEvent],
                 rng: np.random.Generator, interval: float = 1.0, site_id: int = 0,
                 on_alarm: Callable[[DisasterVerdict], None] | None = None):
        self.sim = sim
        self.detector = detector
        self.gen = gen
        self.truth = list(truth)
        self.rng = rng
        self.interval = interval
        self.site_id = site_id
        self.on_alarm = on_alarm
        self.verdicts: list[DisasterVerdict] = []
        self._alarmed = False

    def start(self, until: float):
        self._until = until
        self.sim.at(0.0, self._snapshot, kind="snapshot", target=self.site_id)

    def truth_at(self, t: float) -> DisasterClass:
        for ev in self.truth:
            if ev.start <= t <= ev.end:
                return ev.cls
        return DisasterClass.NONE

    def _snapshot(self):
        now = self.sim.now
        readings = site_readings(self.truth_at(now), self.gen, self.rng, now)
        verdict = classify(self.detector, aggregate(readings, self.gen.n_groups, self.site_id, now))
        self.verdicts.append(verdict)
        positive = verdict.cls != DisasterClass.NONE
        if positive and not self._alarmed and self.on_alarm is not None:
            self.on_alarm(verdict)
        self._alarmed = positive
        nxt = now + self.interval
        if nxt <= self._until:
            self.sim.at(nxt, self._snapshot, kind="snapshot", target=self.site_id)
