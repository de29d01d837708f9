"""Node placement, random-waypoint mobility and free-space propagation."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import Engine, SimTime


@dataclass(frozen=True)
class Position:
    x: float
    y: float

    def distance(self, other: "Position") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class MobilityState:
    current: Position
    waypoint: Position
    speed: float
    phase: str  # "moving" | "paused"
    phase_ends: SimTime
    updated_at: SimTime = 0.0


@dataclass(frozen=True)
class RadioParams:
    p_t: float = 1.0
    wavelength: float = 0.125
    g_t: float = 1.0
    g_r: float = 1.0
    range: float = 250.0

    def __post_init__(self):
        for name in ("p_t", "wavelength", "g_t", "g_r", "range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def power_at(self, d: float) -> float:
        return received_power(self.p_t, self.wavelength, d, self.g_t, self.g_r)

    @property
    def edge_power(self) -> float:
        """Received power at exactly the transmission range."""
        return self.power_at(self.range)


def received_power(p_t: float, wavelength: float, d: float, g_t: float = 1.0,
                   g_r: float = 1.0) -> float:
    """Free-space received power ``P_t (lambda / 4 pi d)^2 G_t G_r`` in watts."""
    if d <= 0:
        raise ZeroDivisionError(f"received power undefined at distance {d!r} (collocated nodes)")
    if p_t <= 0 or wavelength <= 0 or g_t <= 0 or g_r <= 0:
        raise ValueError("transmit power, wavelength and gains must be positive")
    ratio = wavelength / (4.0 * math.pi * d)
    return p_t * ratio * ratio * g_t * g_r


def in_range(a: Position, b: Position, range_m: float) -> bool:
    # inclusive at the boundary
    return math.hypot(a.x - b.x, a.y - b.y) <= range_m


def _uniform_point(rng, area: tuple[float, float]) -> Position:
    return Position(rng.uniform(0.0, area[0]), rng.uniform(0.0, area[1]))


def _start_leg(state: MobilityState, t: SimTime, rng, area, speed) -> MobilityState:
    waypoint = _uniform_point(rng, area)
    length = state.current.distance(waypoint)
    return MobilityState(state.current, waypoint, speed, "moving", t + length / speed, t)


def advance_mobility(node: MobilityState, now: SimTime, rng, area: tuple[float, float],
                     speed: float, pause: float) -> MobilityState:
    """Advance a random-waypoint node to ``now``.

    Every phase boundary crossed on the way is resolved in order, so the
    sequence of waypoint draws does not depend on how often the node is
    queried.
    """
    if now < node.updated_at:
        raise ValueError(f"mobility queried at {now!r} before last update {node.updated_at!r}")
    state = node
    while state.phase_ends <= now:
        t = state.phase_ends
        if state.phase == "moving":
            state = MobilityState(state.waypoint, state.waypoint, state.speed, "paused",
                                  t + pause, t)
            if pause > 0:
                continue
        state = _start_leg(state, t, rng, area, speed)
    if state.phase == "paused":
        return dataclasses.replace(state, updated_at=now)
    return dataclasses.replace(state, current=_interpolate(state, now), updated_at=now)


def _interpolate(state: MobilityState, now: SimTime) -> Position:
    remaining = state.phase_ends - state.updated_at
    if remaining <= 0:
        return state.waypoint
    frac = (now - state.updated_at) / remaining
    cur, wp = state.current, state.waypoint
    return Position(cur.x + (wp.x - cur.x) * frac, cur.y + (wp.y - cur.y) * frac)


class World:
    """Positions of all nodes, kept as piecewise-linear legs.

    Each node has one pending mobility-waypoint event at its current phase
    end; between events a position is an affine function of time, which is
    what :meth:`positions` evaluates for every node at once.
    """

    def __init__(self, engine: Engine, num_nodes: int, area: tuple[float, float],
                 speed: float, pause: float, radio: RadioParams,
                 on_waypoint: Optional[Callable[[int, SimTime, Position], None]] = None):
        self.engine = engine
        self.n = num_nodes
        self.area = area
        self.speed = speed
        self.pause = pause
        self.radio = radio
        self.on_waypoint = on_waypoint
        topo = engine.rng_stream("topology")
        self._rngs = [engine.rng_stream("mobility", i) for i in range(num_nodes)]
        self.states: list[MobilityState] = []
        for i in range(num_nodes):
            start = _uniform_point(topo, area)
            # pause at the initial position first, as ns-2's setdest does
            state = MobilityState(start, start, speed, "paused", engine.now + pause, engine.now)
            if pause == 0:
                state = _start_leg(state, engine.now, self._rngs[i], area, speed)
            self.states.append(state)
        self._origin = np.zeros((num_nodes, 2))
        self._velocity = np.zeros((num_nodes, 2))
        self._t0 = np.zeros(num_nodes)
        self._t1 = np.zeros(num_nodes)
        for i in range(num_nodes):
            self._load_leg(i)
            self._schedule(i)
        self._cache_t: Optional[float] = None
        self._cache_pos: Optional[np.ndarray] = None
        self._cache_dist: dict[int, np.ndarray] = {}

    def _load_leg(self, i: int) -> None:
        st = self.states[i]
        self._origin[i] = (st.current.x, st.current.y)
        self._t0[i] = st.updated_at
        self._t1[i] = st.phase_ends
        if st.phase == "moving" and st.phase_ends > st.updated_at:
            dt = st.phase_ends - st.updated_at
            self._velocity[i] = ((st.waypoint.x - st.current.x) / dt,
                                 (st.waypoint.y - st.current.y) / dt)
        else:
            self._velocity[i] = (0.0, 0.0)

    def _schedule(self, i: int) -> None:
        self.engine.at(self.states[i].phase_ends, "mobility-waypoint", self._on_phase_end, i,
                       target=i)

    def _on_phase_end(self, i: int) -> None:
        now = self.engine.now
        self.states[i] = advance_mobility(self.states[i], now, self._rngs[i], self.area,
                                          self.speed, self.pause)
        self._load_leg(i)
        self._cache_t = None
        if self.on_waypoint is not None:
            self.on_waypoint(i, now, self.states[i].current)
        self._schedule(i)

    def place(self, i: int, pos: Position) -> None:
        """Move a paused node to ``pos`` (fixed topologies for micro-scenarios)."""
        st = self.states[i]
        if st.phase != "paused":
            raise ValueError(f"node {i} is moving; only paused nodes can be placed")
        self.states[i] = dataclasses.replace(st, current=pos, waypoint=pos)
        self._load_leg(i)
        self._cache_t = None

    def positions(self, t: Optional[SimTime] = None) -> np.ndarray:
        t = self.engine.now if t is None else t
        if t != self._cache_t:
            dt = np.minimum(t, self._t1) - self._t0
            pos = self._origin + self._velocity * dt[:, None]
            np.clip(pos, 0.0, None, out=pos)
            np.minimum(pos, self.area, out=pos)
            self._cache_t = t
            self._cache_pos = pos
            self._cache_dist = {}
        return self._cache_pos

    def position(self, i: int, t: Optional[SimTime] = None) -> Position:
        x, y = self.positions(t)[i]
        return Position(float(x), float(y))

    def distances_from(self, i: int) -> np.ndarray:
        pos = self.positions()
        d = self._cache_dist.get(i)
        if d is None:
            d = np.hypot(pos[:, 0] - pos[i, 0], pos[:, 1] - pos[i, 1])
            self._cache_dist[i] = d
        return d

    def distance(self, i: int, j: int) -> float:
        return float(self.distances_from(i)[j])

    def neighbors(self, i: int) -> list[int]:
        d = self.distances_from(i)
        idx = np.flatnonzero(d <= self.radio.range)
        return idx[idx != i].tolist()

    def connected(self, i: int, j: int) -> bool:
        return self.distance(i, j) <= self.radio.range

    def rx_power(self, i: int, j: int) -> float:
        # collocated nodes are clamped to 1 cm; the formula itself stays singular
        return self.radio.power_at(max(self.distance(i, j), 0.01))
