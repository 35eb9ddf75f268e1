"""Control-channel networking: links, service adverts, discovery, situation gossip.

All control traffic rides a dedicated always-on control channel, so link
availability depends only on distance. A transmission reaches a neighbor
after ``hop_delay_s`` plus uniform jitter and is dropped if the pair has
moved out of range by then.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import kernels
from .engine import to_ms, to_s
from .errors import NotANeighbor
from .mobility import Fleet
from .situation import SituationRecord, encode_situation, parse_situation

log = logging.getLogger(__name__)

ROLES = ("rescue", "gateway", "service_provider", "personnel")


@dataclass(frozen=True)
class ServiceAdvert:
    provider: int
    service: str
    seq: int
    expires_at: float


@dataclass(frozen=True)
class RouteEntry:
    destination: int
    next_hop: int
    hop_count: int
    installed_at: float
    expires_at: float


@dataclass(frozen=True)
class AdvertMessage:
    provider: int
    service: str
    seq: int


@dataclass(frozen=True)
class ServiceRequest:
    origin: int
    request_id: int
    service: str
    ttl_hops: int
    hop_count: int = 1  # hops travelled on arrival


@dataclass(frozen=True)
class ServiceReply:
    provider: int
    origin: int
    request_id: int
    service: str
    hop_count: int = 1


@dataclass(frozen=True)
class SituationMessage:
    origin: int
    xml: str


@dataclass(frozen=True)
class NodeState:
    node_id: int
    position: tuple
    waypoint: tuple
    speed: float
    pause_until: float
    role: str
    services: tuple
    current_channel: int


@dataclass
class Node:
    node_id: int
    role: str = "rescue"
    services: list = field(default_factory=list)
    current_channel: int = -1
    cache: dict = field(default_factory=dict)  # (provider, service) -> ServiceAdvert
    routes: dict = field(default_factory=dict)  # destination -> RouteEntry
    seen_requests: set = field(default_factory=set)
    situations: dict = field(default_factory=dict)  # (origin, timestamp ms) -> SituationRecord
    request_counter: int = 0
    advert_seq: int = 0

    def route_to(self, dest: int, now: float) -> RouteEntry | None:
        r = self.routes.get(dest)
        if r is None or r.expires_at < now:
            return None
        return r

    def install_route(self, dest: int, next_hop: int, hops: int, now: float, lifetime: float) -> RouteEntry:
        # freshest information wins; there are no destination sequence numbers
        entry = RouteEntry(dest, next_hop, hops, now, now + lifetime)
        self.routes[dest] = entry
        return entry

    def cache_lookup(self, service: str, now: float) -> list[ServiceAdvert]:
        return sorted(
            (a for a in self.cache.values() if a.service == service and a.expires_at >= now),
            key=lambda a: a.provider,
        )

    def cache_store(self, advert: ServiceAdvert, now: float) -> bool:
        key = (advert.provider, advert.service)
        old = self.cache.get(key)
        # an unexpired entry is only displaced by the same or a newer seq
        if old is not None and old.expires_at >= now and advert.seq < old.seq:
            return False
        self.cache[key] = advert
        return True

    def situation_query(self, status: str | None = None, since: float | None = None) -> list[SituationRecord]:
        recs = [r for r in self.situations.values()
                if (status is None or r.status == status) and (since is None or r.timestamp >= since)]
        return sorted(recs, key=lambda r: (-r.timestamp, r.x, r.y))


@dataclass
class Discovery:
    origin: int
    service: str
    issued_ms: int
    request_ids: list = field(default_factory=list)
    resolved_ms: int | None = None
    outcome: str = "pending"  # local | cache | found | not_found
    provider: int | None = None
    hops: int | None = None
    callback: Callable | None = field(default=None, repr=False)

    @property
    def done(self) -> bool:
        return self.resolved_ms is not None

    @property
    def succeeded(self) -> bool:
        return self.outcome in ("local", "cache", "found")

    @property
    def issued_at(self) -> float:
        return to_s(self.issued_ms)

    @property
    def resolved_at(self) -> float | None:
        return None if self.resolved_ms is None else to_s(self.resolved_ms)

    @property
    def latency(self) -> float | None:
        if not self.succeeded:
            return None
        return to_s(self.resolved_ms - self.issued_ms)


class Network:
    def __init__(self, sim, fleet: Fleet, range_m: float, cfg, rng_for: Callable[[str], np.random.Generator]):
        self.sim = sim
        self.fleet = fleet
        self.range_m = float(range_m)
        self.r2 = self.range_m * self.range_m
        self.cfg = cfg
        self.rng_for = rng_for
        self.nodes = [Node(i) for i in range(len(fleet))]
        self.drops: Counter = Counter()
        self.flood_forwards: Counter = Counter()  # (origin, request_id) -> broadcasts
        self.alive_after_ttl = 0
        self.discoveries: list[Discovery] = []
        self.reply_paths: list[tuple] = []  # (origin, provider, hop_count, routes ok)
        self.messages_sent = 0
        self._pending: dict[tuple, Discovery] = {}
        self._link_rngs: dict[int, np.random.Generator] = {}
        self._adj_t: int | None = None
        self._adj: np.ndarray | None = None
        self.hop_ms = to_ms(cfg.hop_delay_s)

    # -- topology -------------------------------------------------------
    def set_services(self, node_id: int, services, role: str | None = None):
        node = self.nodes[node_id]
        node.services = list(services)
        if role is not None:
            if role not in ROLES:
                raise ValueError(f"unknown role {role!r}")
            node.role = role

    def node_state(self, i: int) -> NodeState:
        t = self.sim.now
        m = self.fleet.movers[i]
        n = self.nodes[i]
        return NodeState(i, m.position_at(t), m.waypoint_at(t), m.speed_at(t), m.pause_until(t),
                         n.role, tuple(n.services), n.current_channel)

    def adjacency(self, t: float | None = None) -> np.ndarray:
        t_ms = self.sim.now_ms if t is None else to_ms(t)
        if t_ms != self._adj_t:
            self._adj = kernels.adjacency(self.fleet.positions(to_s(t_ms)), self.range_m)
            self._adj_t = t_ms
        return self._adj

    def neighbors(self, i: int, t: float | None = None) -> list[int]:
        return np.flatnonzero(self.adjacency(t)[i]).tolist()

    def in_range(self, a: int, b: int, t: float) -> bool:
        ax, ay = self.fleet.position(a, t)
        bx, by = self.fleet.position(b, t)
        dx, dy = ax - bx, ay - by
        return dx * dx + dy * dy <= self.r2

    # -- link layer -----------------------------------------------------
    def _jitter_ms(self, frm: int) -> int:
        if self.cfg.jitter_max_s <= 0:
            return 0
        rng = self._link_rngs.get(frm)
        if rng is None:
            rng = self._link_rngs[frm] = self.rng_for(f"link/{frm}")
        return to_ms(rng.uniform(0.0, self.cfg.jitter_max_s))

    def send(self, frm: int, to: int, msg):
        if to == frm or not self.adjacency()[frm, to]:
            raise NotANeighbor(f"node {to} is not a neighbor of node {frm} at t={self.sim.now:.3f}")
        self.messages_sent += 1
        delay = self.hop_ms + self._jitter_ms(frm)
        return self.sim.at_ms(self.sim.now_ms + delay, self._deliver, frm, to, msg, kind="deliver", target=to)

    def broadcast(self, frm: int, msg) -> list[int]:
        nbrs = self.neighbors(frm)
        for j in nbrs:
            self.send(frm, j, msg)
        return nbrs

    def _deliver(self, frm: int, to: int, msg):
        if not self.in_range(frm, to, self.sim.now):
            self.drops["out_of_range"] += 1
            return
        if isinstance(msg, ServiceRequest):
            self._on_request(to, frm, msg)
        elif isinstance(msg, ServiceReply):
            self._on_reply(to, frm, msg)
        elif isinstance(msg, AdvertMessage):
            self._on_advert(to, frm, msg)
        elif isinstance(msg, SituationMessage):
            self._on_situation(to, frm, msg)
        else:  # pragma: no cover
            raise TypeError(f"unknown message {msg!r}")

    # -- proactive adverts ----------------------------------------------
    def start_adverts(self, until: float):
        self._advert_until_ms = to_ms(until)
        period = self.cfg.advert_period_s
        for node in self.nodes:
            if node.services:
                phase = self.rng_for(f"advert/{node.node_id}").uniform(0.0, period)
                t_ms = self.sim.now_ms + to_ms(phase)
                if t_ms <= self._advert_until_ms:
                    self.sim.at_ms(t_ms, self._advert_tick, node.node_id, kind="advert", target=node.node_id)

    def _advert_tick(self, i: int):
        self.advertise(i)
        nxt = self.sim.now_ms + to_ms(self.cfg.advert_period_s)
        if nxt <= self._advert_until_ms:
            self.sim.at_ms(nxt, self._advert_tick, i, kind="advert", target=i)

    def advertise(self, i: int) -> list[int]:
        node = self.nodes[i]
        if not node.services:
            return []
        node.advert_seq += 1
        nbrs = []
        for service in node.services:
            nbrs = self.broadcast(i, AdvertMessage(i, service, node.advert_seq))
        return nbrs

    def _on_advert(self, j: int, frm: int, msg: AdvertMessage):
        now = self.sim.now
        node = self.nodes[j]
        advert = ServiceAdvert(msg.provider, msg.service, msg.seq, now + self.cfg.cache_ttl_s)
        if node.cache_store(advert, now):
            node.install_route(msg.provider, frm, 1, now, self.cfg.cache_ttl_s)

    # -- discovery ------------------------------------------------------
    def cache_hit(self, i: int, service: str) -> ServiceAdvert | None:
        now = self.sim.now
        node = self.nodes[i]
        for advert in node.cache_lookup(service, now):
            if node.route_to(advert.provider, now) is not None:
                return advert
        return None

    def discover(self, origin: int, service: str, callback: Callable | None = None) -> Discovery:
        d = Discovery(origin, service, self.sim.now_ms, callback=callback)
        self.discoveries.append(d)
        node = self.nodes[origin]
        if service in node.services:
            self._resolve(d, "local", origin, 0)
            return d
        hit = self.cache_hit(origin, service)
        if hit is not None:
            self._resolve(d, "cache", hit.provider, 0)
            return d
        self._flood(d)
        return d

    def _flood(self, d: Discovery):
        node = self.nodes[d.origin]
        node.request_counter += 1
        rid = node.request_counter
        d.request_ids.append(rid)
        self._pending[(d.origin, rid)] = d
        node.seen_requests.add((d.origin, rid))
        self._forward(d.origin, ServiceRequest(d.origin, rid, d.service, self.cfg.ttl_hops, 1))
        attempt = len(d.request_ids)
        self.sim.at_ms(self.sim.now_ms + to_ms(self.cfg.discovery_timeout_s), self._on_timeout, d, attempt,
                       kind="discovery-timeout", target=d.origin)

    def _forward(self, i: int, msg: ServiceRequest):
        if msg.ttl_hops <= 0:
            self.alive_after_ttl += 1
        self.flood_forwards[(msg.origin, msg.request_id)] += 1
        self.broadcast(i, msg)

    def _on_timeout(self, d: Discovery, attempt: int):
        if d.done or attempt != len(d.request_ids):
            return
        if attempt <= self.cfg.discovery_retries:
            self._flood(d)
        else:
            self._resolve(d, "not_found", None, None)

    def _on_request(self, j: int, frm: int, msg: ServiceRequest):
        node = self.nodes[j]
        key = (msg.origin, msg.request_id)
        if key in node.seen_requests:
            self.drops["duplicate_request"] += 1
            return
        node.seen_requests.add(key)
        now = self.sim.now
        node.install_route(msg.origin, frm, msg.hop_count, now, self.cfg.route_lifetime_s)
        if msg.service in node.services:
            self._send_reply(j, ServiceReply(j, msg.origin, msg.request_id, msg.service, 1))
        elif msg.ttl_hops - 1 > 0:
            self._forward(j, replace(msg, ttl_hops=msg.ttl_hops - 1, hop_count=msg.hop_count + 1))
        else:
            self.drops["ttl_expired"] += 1

    def _send_reply(self, j: int, reply: ServiceReply):
        route = self.nodes[j].route_to(reply.origin, self.sim.now)
        if route is None:
            self.drops["no_route"] += 1
            return
        try:
            self.send(j, route.next_hop, reply)
        except NotANeighbor:
            self.drops["not_neighbor"] += 1

    def _on_reply(self, j: int, frm: int, msg: ServiceReply):
        now = self.sim.now
        node = self.nodes[j]
        node.install_route(msg.provider, frm, msg.hop_count, now, self.cfg.route_lifetime_s)
        if j != msg.origin:
            self._send_reply(j, replace(msg, hop_count=msg.hop_count + 1))
            return
        d = self._pending.get((msg.origin, msg.request_id))
        if d is None or d.done:
            self.drops["late_reply"] += 1
            return
        self.reply_paths.append((msg.origin, msg.provider, msg.hop_count, self.route_walk(msg.origin, msg.provider)))
        node.cache_store(ServiceAdvert(msg.provider, msg.service, 0, now + self.cfg.cache_ttl_s), now)
        self._resolve(d, "found", msg.provider, msg.hop_count)

    def route_walk(self, origin: int, dest: int, limit: int = 64) -> int | None:
        """Hops taken following valid ``next_hop`` entries from origin to dest."""
        now = self.sim.now
        here, hops = origin, 0
        while here != dest and hops < limit:
            r = self.nodes[here].route_to(dest, now)
            if r is None:
                return None
            here, hops = r.next_hop, hops + 1
        return hops if here == dest else None

    def _resolve(self, d: Discovery, outcome: str, provider, hops):
        d.resolved_ms = self.sim.now_ms
        d.outcome = outcome
        d.provider = provider
        d.hops = hops
        for rid in d.request_ids:
            self._pending.pop((d.origin, rid), None)
        if d.callback is not None:
            d.callback(d)

    # -- situation gossip -----------------------------------------------
    def publish_situation(self, i: int, rec: SituationRecord):
        node = self.nodes[i]
        key = (i, to_ms(rec.timestamp))
        node.situations[key] = rec
        self.broadcast(i, SituationMessage(i, encode_situation(rec)))

    def _on_situation(self, j: int, frm: int, msg: SituationMessage):
        rec = parse_situation(msg.xml)
        node = self.nodes[j]
        key = (msg.origin, to_ms(rec.timestamp))
        if key in node.situations:
            self.drops["duplicate_situation"] += 1
            return
        node.situations[key] = rec
        self.broadcast(j, msg)

    def situation_coverage(self, key) -> float:
        return sum(key in n.situations for n in self.nodes) / len(self.nodes)
