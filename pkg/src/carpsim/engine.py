"""Discrete-event kernel: virtual clock, event queue, named RNG streams and
scenario configuration."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

SimTime = float

EVENT_KINDS = ("packet-delivery", "timer", "mobility-waypoint", "traffic-tick")
STREAM_LABELS = ("mobility", "traffic", "mac-backoff", "topology")
PROTOCOLS = ("carp", "aomdv")
ROUTE_METRICS = ("sum-weight", "inverse-cost")


class SchedulingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class EventError(RuntimeError):
    """An event handler raised; carries the event that was being processed."""

    def __init__(self, event: "SimEvent", cause: BaseException):
        super().__init__(
            f"handler for {event.kind} event at t={event.fire_at!r} "
            f"(seq {event.seq}, target {event.target}) failed: {cause!r}")
        self.event = event
        self.cause = cause


@dataclass(eq=False)
class SimEvent:
    fire_at: SimTime
    seq: int
    kind: str = field(compare=False)
    target: Optional[int] = field(default=None, compare=False)
    action: Optional[Callable[..., Any]] = field(default=None, compare=False, repr=False)
    args: tuple = field(default=(), compare=False, repr=False)
    cancelled: bool = field(default=False, compare=False, repr=False)

    def __lt__(self, other: "SimEvent") -> bool:
        # hot path of the heap; avoids building comparison tuples
        if self.fire_at != other.fire_at:
            return self.fire_at < other.fire_at
        return self.seq < other.seq

    def cancel(self) -> None:
        self.cancelled = True


class Engine:
    """Single-threaded event loop ordered by ``(fire_at, seq)``."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now: SimTime = 0.0
        self.processed = 0
        self._queue: list[SimEvent] = []
        self._seq = 0

    def __len__(self) -> int:
        return len(self._queue)

    def next_seq(self) -> int:
        seq = self._seq
        self._seq += 1
        return seq

    def schedule(self, ev: SimEvent) -> SimEvent:
        if not math.isfinite(ev.fire_at):
            raise SchedulingError(f"non-finite time {ev.fire_at!r} for {ev.kind} event")
        if ev.fire_at < self.now:
            raise SchedulingError(
                f"{ev.kind} event scheduled at t={ev.fire_at!r} in the past "
                f"(clock t={self.now!r})")
        heapq.heappush(self._queue, ev)
        return ev

    def at(self, t: SimTime, kind: str, action: Callable[..., Any], *args,
           target: Optional[int] = None) -> SimEvent:
        return self.schedule(SimEvent(t, self.next_seq(), kind, target, action, args))

    def after(self, delay: float, kind: str, action: Callable[..., Any], *args,
              target: Optional[int] = None) -> SimEvent:
        return self.at(self.now + delay, kind, action, *args, target=target)

    def pop(self) -> SimEvent:
        ev = heapq.heappop(self._queue)
        self.now = ev.fire_at
        return ev

    def peek_time(self) -> Optional[SimTime]:
        return self._queue[0].fire_at if self._queue else None

    def run_until(self, t_end: SimTime) -> None:
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end!r}) is before clock t={self.now!r}")
        queue = self._queue
        while queue and queue[0].fire_at <= t_end:
            ev = heapq.heappop(queue)
            if ev.cancelled:
                continue
            self.now = ev.fire_at
            self.processed += 1
            if ev.action is None:
                continue
            try:
                ev.action(*ev.args)
            except EventError:
                raise
            except Exception as exc:
                raise EventError(ev, exc) from exc
        self.now = t_end

    def rng_stream(self, label: str, index: Optional[int] = None) -> random.Random:
        return rng_stream(self.seed, label, index)


def rng_stream(seed: int, label: str, index: Optional[int] = None) -> random.Random:
    """Independent generator keyed on ``(seed, label[, index])``.

    The key is hashed so nearby seeds do not produce correlated streams.
    """
    if label not in STREAM_LABELS:
        raise ValueError(f"unknown RNG stream {label!r}; expected one of {STREAM_LABELS}")
    key = f"{seed}:{label}" if index is None else f"{seed}:{label}:{index}"
    digest = hashlib.sha256(key.encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


# config-file key -> ScenarioConfig attribute
FILE_KEYS = {
    "nodes": "num_nodes",
    "area_x": "area_x",
    "area_y": "area_y",
    "range": "tx_range",
    "sim_time": "sim_time",
    "speed": "speed",
    "pause": "pause_time",
    "rate": "channel_rate",
    "pkt_size": "packet_size",
    "protocol": "protocol",
    "seed": "seed",
    "flows": "num_flows",
    "cbr_interval": "cbr_interval",
    "t_rts": "t_rts",
    "t_cts": "t_cts",
    "t_sifs": "t_sifs",
}


@dataclass(frozen=True)
class ScenarioConfig:
    num_nodes: int = 50
    area_x: float = 1500.0
    area_y: float = 300.0
    tx_range: float = 250.0
    sim_time: float = 100.0
    speed: float = 5.0
    pause_time: float = 0.0
    channel_rate: float = 2e6
    packet_size: int = 512
    protocol: str = "carp"
    seed: int = 1
    num_flows: int = 10
    cbr_interval: float = 0.25
    traffic_start: float = 1.0
    traffic_stop: Optional[float] = None  # None: one second before sim_time

    # MAC
    t_rts: float = 352e-6
    t_cts: float = 304e-6
    t_sifs: float = 10e-6
    t_ack: float = 304e-6
    t_difs: float = 50e-6
    backoff_slot: float = 20e-6
    cw_min: int = 31
    cw_max: int = 1023
    max_retries: int = 4
    queue_capacity: int = 50
    rate_classes: tuple[float, ...] = ()  # empty: every node at channel_rate

    # radio
    tx_power: float = 1.0
    wavelength: float = 0.125

    # metric estimators
    alpha_lq: float = 1.0
    alpha_mac: float = 0.3

    # routing
    rreq_jitter: float = 0.01
    route_metric: str = "inverse-cost"
    max_replies: int = 3
    max_rreq_forwards: int = 1
    delay_bound: float = 0.150
    backoff_quantum: float = 0.050
    pending_capacity: int = 64
    reply_window: float = 0.02
    rrep_wait: float = 0.03
    discovery_timeout: float = 1.0
    rreq_retries: int = 2
    probe_timeout: float = 1.0
    dummy_interval: float = 0.05  # spacing of DUMMYs within a probe stream
    route_timeout: float = 10.0

    def __post_init__(self):
        self.validate()

    @property
    def area(self) -> tuple[float, float]:
        return (self.area_x, self.area_y)

    def validate(self) -> None:
        if self.num_nodes < 2:
            raise ConfigError(f"nodes must be >= 2, got {self.num_nodes}")
        positive = ("area_x", "area_y", "tx_range", "sim_time", "speed", "channel_rate",
                    "packet_size", "cbr_interval", "t_rts", "t_cts", "t_sifs", "t_ack",
                    "t_difs", "backoff_slot", "tx_power", "wavelength", "delay_bound",
                    "backoff_quantum")
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be positive and finite, got {value!r}")
        if self.pause_time < 0:
            raise ConfigError(f"pause must be >= 0, got {self.pause_time!r}")
        if self.tx_range > max(self.area_x, self.area_y):
            raise ConfigError("range must not exceed the larger area dimension")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        if self.dummy_interval < 0:
            raise ConfigError("dummy_interval must be >= 0")
        if self.route_metric not in ROUTE_METRICS:
            raise ConfigError(f"route_metric must be one of {ROUTE_METRICS}")
        if self.num_flows < 0:
            raise ConfigError("flows must be >= 0")
        if not 0 < self.cw_min <= self.cw_max:
            raise ConfigError("need 0 < cw_min <= cw_max")
        if self.max_retries < 1 or self.queue_capacity < 1:
            raise ConfigError("max_retries and queue_capacity must be >= 1")
        if not (0 < self.alpha_lq <= 1 and 0 < self.alpha_mac <= 1):
            raise ConfigError("smoothing factors must lie in (0, 1]")
        if any(r <= 0 for r in self.rate_classes):
            raise ConfigError("rate classes must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _coerce(attr: str, raw: str):
    kind = _FIELD_TYPES[attr]
    try:
        if kind == "int":
            value = float(raw)
            if not value.is_integer():
                raise ValueError(raw)
            return int(value)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {attr}") from exc
    return raw.strip()


def config_from_mapping(values: dict[str, Any], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Build a config from file-key -> value pairs layered over ``base``."""
    changes = {}
    for key, raw in values.items():
        if key not in FILE_KEYS:
            raise ConfigError(f"unknown configuration key {key!r}")
        attr = FILE_KEYS[key]
        changes[attr] = _coerce(attr, raw) if isinstance(raw, str) else raw
    base = base or ScenarioConfig()
    try:
        return base.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Read a flat ``key = value`` scenario file (``#`` comments allowed)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    with open(path) as fh:
        text = fh.read()
    try:
        parser.read_string("[scenario]\n" + text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_mapping(dict(parser["scenario"]), base)
