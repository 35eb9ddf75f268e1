"""Random-waypoint mobility.

Each node's trajectory is a list of legs generated lazily from its own RNG
stream: travel in a straight line to a waypoint, pause, draw the next
waypoint. The leg sequence does not depend on when positions are queried,
so historical lookups stay exact.
"""

from __future__ import annotations

import bisect
import logging
import math

import numpy as np

log = logging.getLogger(__name__)


class Mover:
    def __init__(self, node_id: int, start, rng: np.random.Generator | None, area=(1000.0, 1000.0),
                 speed_range=(1.0, 5.0), pause_s: float = 2.0, waypoint=None, speed: float | None = None,
                 static: bool = False):
        self.node_id = node_id
        self.rng = rng
        self.area = (float(area[0]), float(area[1]))
        self.speed_range = (float(speed_range[0]), float(speed_range[1]))
        self.pause_s = float(pause_s)
        self.static = static
        x, y = float(start[0]), float(start[1])
        if not (0 <= x <= self.area[0] and 0 <= y <= self.area[1]):
            raise ValueError(f"node {node_id} starts outside the area at {(x, y)}")
        # leg columns: depart time, from, to, arrival time, pause end
        self._t0: list[float] = []
        self._legs: list[tuple] = []
        if static:
            self._append(0.0, x, y, x, y, 0.0, math.inf)
            return
        if speed is not None:
            lo, hi = self.speed_range
            if not lo <= speed <= hi:
                clamped = min(max(speed, lo), hi)
                log.warning("node %s: speed %.3f outside [%.3f, %.3f], clamped to %.3f", node_id, speed, lo, hi, clamped)
                speed = clamped
        wx, wy = waypoint if waypoint is not None else self._draw_waypoint()
        self._add_leg(0.0, x, y, float(wx), float(wy), speed)

    def _draw_waypoint(self):
        return self.rng.uniform(0.0, self.area[0]), self.rng.uniform(0.0, self.area[1])

    def _append(self, t0, x0, y0, x1, y1, t_arr, t_dep):
        self._t0.append(t0)
        self._legs.append((t0, x0, y0, x1, y1, t_arr, t_dep))

    def _add_leg(self, t0, x0, y0, x1, y1, speed=None):
        if speed is None:
            speed = self.rng.uniform(*self.speed_range)
        dist = math.hypot(x1 - x0, y1 - y0)
        t_arr = t0 + (dist / speed if speed > 0 else 0.0)
        self._append(t0, x0, y0, x1, y1, t_arr, t_arr + self.pause_s)

    def _extend_to(self, t: float):
        while self._legs[-1][6] <= t:
            _, _, _, x1, y1, _, t_dep = self._legs[-1]
            wx, wy = self._draw_waypoint()
            self._add_leg(t_dep, x1, y1, wx, wy)

    def leg_at(self, t: float) -> tuple:
        self._extend_to(t)
        return self._legs[bisect.bisect_right(self._t0, t) - 1]

    def position_at(self, t: float) -> tuple[float, float]:
        if t < 0:
            raise ValueError("time must be >= 0")
        t0, x0, y0, x1, y1, t_arr, _ = self.leg_at(t)
        if t >= t_arr:
            return (x1, y1)
        f = (t - t0) / (t_arr - t0)
        return (x0 + f * (x1 - x0), y0 + f * (y1 - y0))

    def waypoint_at(self, t: float):
        leg = self.leg_at(t)
        return (leg[3], leg[4])

    def speed_at(self, t: float) -> float:
        t0, x0, y0, x1, y1, t_arr, _ = self.leg_at(t)
        return 0.0 if t_arr <= t0 else math.hypot(x1 - x0, y1 - y0) / (t_arr - t0)

    def pause_until(self, t: float) -> float:
        return self.leg_at(t)[6]


class Fleet:
    """All movers, with a per-millisecond cache of the position matrix."""

    def __init__(self, movers: list[Mover]):
        self.movers = movers
        self._cache_t: float | None = None
        self._cache_xy: np.ndarray | None = None

    def __len__(self):
        return len(self.movers)

    def positions(self, t: float) -> np.ndarray:
        if t != self._cache_t:
            xy = np.empty((len(self.movers), 2), dtype=np.float64)
            for i, m in enumerate(self.movers):
                xy[i] = m.position_at(t)
            self._cache_t, self._cache_xy = t, xy
        return self._cache_xy

    def position(self, i: int, t: float) -> tuple[float, float]:
        if t == self._cache_t:
            x, y = self._cache_xy[i]
            return (float(x), float(y))
        return self.movers[i].position_at(t)


def random_fleet(n: int, area, speed_range, pause_s, rng_for, static: bool = False) -> Fleet:
    """``rng_for(i)`` returns node ``i``'s mobility stream."""
    movers = []
    for i in range(n):
        rng = rng_for(i)
        start = (rng.uniform(0.0, area[0]), rng.uniform(0.0, area[1]))
        movers.append(Mover(i, start, rng, area, speed_range, pause_s, static=static))
    return Fleet(movers)


def static_fleet(points) -> Fleet:
    xs = [float(p[0]) for p in points] or [0.0]
    ys = [float(p[1]) for p in points] or [0.0]
    area = (max(max(xs), 1.0), max(max(ys), 1.0))
    return Fleet([Mover(i, p, None, area, static=True) for i, p in enumerate(points)])
