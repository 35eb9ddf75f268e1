"""Call-tree escalation after a disaster verdict.

Find a gateway, then contact personnel one level at a time. Each level
gets a fixed wait; the first in-window response declares the disaster,
and if every level stays silent the fallback alarm fires right after the
last wait. Either way the outcome ends in the recovery-initiated state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .detection import DisasterClass, DisasterVerdict
from .engine import to_ms, to_s

GATEWAY_SERVICE = "gateway"


@dataclass(frozen=True)
class CallTree:
    levels: tuple

    def __post_init__(self):
        levels = tuple(int(x) for x in self.levels)
        if not levels:
            raise ValueError("call tree needs at least one level")
        if len(set(levels)) != len(levels):
            raise ValueError("call tree levels must be distinct nodes")
        object.__setattr__(self, "levels", levels)


@dataclass(frozen=True)
class PersonnelModel:
    node_id: int
    respond_prob: float = 0.5
    response_delay_s: tuple = (1.0, 5.0)

    def __post_init__(self):
        if not 0.0 <= self.respond_prob <= 1.0:
            raise ValueError("respond_prob must be in [0, 1]")
        lo, hi = self.response_delay_s
        if not 0 <= lo <= hi:
            raise ValueError("response_delay_s must satisfy 0 <= lo <= hi")


@dataclass
class Attempt:
    level: int
    node_id: int
    contacted_at: float
    result: str = "waiting"  # responded | silent | late
    response_at: float | None = None


@dataclass
class ResponseOutcome:
    verdict_time: float
    state: str = "gateway_search"  # gateway_search | escalating | recovery_initiated
    gateway: int | None = None
    gateway_found_at: float | None = None
    gateway_lookups: int = 0
    declared_by: int | str | None = None  # level number or "fallback"
    declared_at: float | None = None
    attempts: list = field(default_factory=list)

    @property
    def attempts_text(self) -> str:
        return ";".join(f"{a.level}:{a.result}" for a in self.attempts)


def contact_personnel(personnel: PersonnelModel, t: float, rng: np.random.Generator) -> float | None:
    """Response time of ``personnel`` contacted at ``t``, or None for silence."""
    if rng.random() >= personnel.respond_prob:
        return None
    lo, hi = personnel.response_delay_s
    delay = lo if lo == hi else rng.uniform(lo, hi)
    return round(t + delay, 3)


class ResponseCoordinator:
    """Runs one escalation per initiated verdict on the simulator.

    ``discover(origin, service, callback)`` is the network's discovery
    entry point; the callback receives an object with ``succeeded``,
    ``provider`` and ``resolved_at``.
    """

    def __init__(self, sim, discover: Callable, site_node: int, tree: CallTree,
                 personnel: dict, rng: np.random.Generator, wait_s: float = 10.0,
                 gateway_retry_s: float = 5.0, on_declared: Callable | None = None):
        self.sim = sim
        self.discover = discover
        self.site_node = site_node
        self.tree = tree
        self.personnel = personnel
        self.rng = rng
        self.wait_ms = to_ms(wait_s)
        self.retry_ms = to_ms(gateway_retry_s)
        self.on_declared = on_declared
        self.outcomes: list[ResponseOutcome] = []

    def initiate(self, verdict: DisasterVerdict) -> ResponseOutcome:
        if verdict.cls == DisasterClass.NONE:
            raise ValueError("no response for a 'none' verdict")
        out = ResponseOutcome(verdict_time=self.sim.now)
        self.outcomes.append(out)
        self._find_gateway(out)
        return out

    def _find_gateway(self, out: ResponseOutcome):
        out.gateway_lookups += 1
        self.discover(self.site_node, GATEWAY_SERVICE, lambda d: self._gateway_result(out, d))

    def _gateway_result(self, out: ResponseOutcome, d):
        if not d.succeeded:
            self.sim.at_ms(self.sim.now_ms + self.retry_ms, self._find_gateway, out,
                           kind="gateway-retry", target=self.site_node)
            return
        out.gateway = d.provider
        out.gateway_found_at = self.sim.now
        out.state = "escalating"
        self._contact(out, 1)

    def _contact(self, out: ResponseOutcome, level: int):
        node = self.tree.levels[level - 1]
        now_ms = self.sim.now_ms
        attempt = Attempt(level, node, to_s(now_ms))
        out.attempts.append(attempt)
        model = self.personnel.get(node) or PersonnelModel(node)
        resp = contact_personnel(model, to_s(now_ms), self.rng)
        if resp is not None and to_ms(resp) - now_ms <= self.wait_ms:
            attempt.result = "responded"
            attempt.response_at = resp
            self.sim.at_ms(to_ms(resp), self._declare, out, level, kind="declare", target=node)
            return
        if resp is not None:
            # arrives after the wait: ignored, escalation moves on
            attempt.result = "late"
            attempt.response_at = resp
        else:
            attempt.result = "silent"
        self.sim.at_ms(now_ms + self.wait_ms, self._next_level, out, level, kind="escalate", target=node)

    def _next_level(self, out: ResponseOutcome, level: int):
        if level >= len(self.tree.levels):
            self._declare(out, "fallback")
        else:
            self._contact(out, level + 1)

    def _declare(self, out: ResponseOutcome, by):
        out.declared_by = by
        out.declared_at = self.sim.now
        out.state = "recovery_initiated"
        if self.on_declared is not None:
            self.on_declared(out)
