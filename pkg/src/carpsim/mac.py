"""Simplified 802.11 DCF at exchange granularity.

A unicast frame costs DIFS + backoff, then RTS. If no other transmission
overlaps the RTS at either the sender or the receiver, the rest
of the RTS/CTS/DATA/ACK exchange is reserved as one interval around both
ends. Otherwise the sender times out waiting for CTS, doubles its
contention window and tries again, up to ``max_retries`` attempts.
Broadcast frames skip RTS/CTS/ACK and are never retried.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Optional, Protocol

from .engine import Engine, SimTime
from .world import World

BROADCAST = -1


@dataclass(frozen=True)
class MacTimings:
    t_rts: float = 352e-6
    t_cts: float = 304e-6
    t_sifs: float = 10e-6
    t_ack: float = 304e-6
    t_difs: float = 50e-6
    backoff_slot: float = 20e-6
    cw_min: int = 31
    cw_max: int = 1023
    max_retries: int = 4

    def __post_init__(self):
        for name in ("t_rts", "t_cts", "t_sifs", "t_ack", "t_difs", "backoff_slot"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.cw_min <= self.cw_max:
            raise ValueError("need 0 < cw_min <= cw_max")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")

    @classmethod
    def from_config(cls, cfg) -> "MacTimings":
        return cls(cfg.t_rts, cfg.t_cts, cfg.t_sifs, cfg.t_ack, cfg.t_difs, cfg.backoff_slot,
                   cfg.cw_min, cfg.cw_max, cfg.max_retries)


@dataclass(frozen=True)
class DataRateClass:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass
class MacQueueEntry:
    packet: Any
    next_hop: int
    enqueued_at: SimTime
    hol_since: Optional[SimTime] = None
    retries: int = 0


def channel_occupation(t: MacTimings) -> float:
    """RTS + CTS + three SIFS gaps, in seconds."""
    return t.t_rts + t.t_cts + 3 * t.t_sifs


def data_airtime(size_bytes: int, rate: float | DataRateClass) -> float:
    if isinstance(rate, DataRateClass):
        rate = rate.rate
    if size_bytes <= 0:
        raise ValueError(f"packet size must be positive, got {size_bytes!r}")
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate!r}")
    return 8.0 * size_bytes / rate


class MacListener(Protocol):
    def mac_receive(self, node: int, sender: int, packet: Any, p_r: float) -> None: ...
    def mac_rts_heard(self, node: int, sender: int, p_r: float) -> None: ...
    def mac_access_sample(self, node: int, t_acc: float) -> None: ...
    def mac_exchange_done(self, node: int, entry: MacQueueEntry, c_delay: float,
                          sojourn: float) -> None: ...
    def mac_link_failure(self, node: int, entry: MacQueueEntry) -> None: ...
    def mac_overflow(self, node: int, packet: Any) -> None: ...


class _Station:
    __slots__ = ("queue", "cw", "slots", "countdown_from", "timer", "state", "busy_start",
                 "busy_until", "heard", "rate")

    def __init__(self, cw: int, rate: float):
        self.queue: deque[MacQueueEntry] = deque()
        self.cw = cw
        self.slots: Optional[int] = None
        self.countdown_from = 0.0
        self.timer = None
        self.state = "idle"  # idle | contending | rts | exchange | broadcast | wait-cts
        self.busy_start = -1.0
        self.busy_until = -1.0
        # (start, end, tx_id) of every frame or reservation audible here
        self.heard: deque[tuple[float, float, int]] = deque()
        self.rate = rate


class Mac:
    # heard intervals older than this are irrelevant to any in-flight RTS
    _HORIZON = 0.1

    def __init__(self, engine: Engine, world: World, timings: MacTimings,
                 rates: list[float], listener: MacListener, queue_capacity: int = 50,
                 exchange_log: Optional[list] = None):
        self.engine = engine
        self.world = world
        self.t = timings
        self.capacity = queue_capacity
        self.listener = listener
        self.rng = engine.rng_stream("mac-backoff")
        self.stations = [_Station(timings.cw_min, r) for r in rates]
        self._tx_id = 0
        self.overflow_drops = 0
        self.retry_drops = 0
        self.delivered = 0
        self.collisions = 0
        self.exchange_log = exchange_log

    # -- queue -----------------------------------------------------------

    def enqueue(self, node: int, packet: Any, next_hop: int = BROADCAST) -> bool:
        st = self.stations[node]
        if len(st.queue) >= self.capacity:
            self.overflow_drops += 1
            self.listener.mac_overflow(node, packet)
            return False
        now = self.engine.now
        entry = MacQueueEntry(packet, next_hop, now)
        st.queue.append(entry)
        if st.state == "idle":
            self._contend(node)
        return True

    def queue_length(self, node: int) -> int:
        return len(self.stations[node].queue)

    def queued(self, node: int) -> list[MacQueueEntry]:
        return list(self.stations[node].queue)

    def purge(self, node: int, predicate) -> list[MacQueueEntry]:
        """Remove queued entries matching ``predicate``, sparing an in-flight head."""
        st = self.stations[node]
        busy_head = st.state in ("rts", "exchange", "broadcast", "wait-cts")
        kept: deque[MacQueueEntry] = deque()
        removed = []
        for k, entry in enumerate(st.queue):
            if (k == 0 and busy_head) or not predicate(entry):
                kept.append(entry)
            else:
                removed.append(entry)
        if removed:
            head_changed = bool(st.queue) and (not kept or kept[0] is not st.queue[0])
            st.queue = kept
            if head_changed and st.state == "contending":
                # the entry that owned the countdown is gone; restart it for the new head
                if st.timer is not None:
                    st.timer.cancel()
                    st.timer = None
                st.state = "idle"
                if st.queue:
                    self._contend(node)
                else:
                    st.slots = None
        return removed

    # -- channel bookkeeping --------------------------------------------

    def _next_tx(self) -> int:
        self._tx_id += 1
        return self._tx_id

    def _occupy(self, nodes, start: float, end: float, tx_id: int) -> None:
        stations = self.stations
        horizon = start - self._HORIZON
        for j in nodes:
            st = stations[j]
            if start > st.busy_until:
                st.busy_start = start
            if end > st.busy_until:
                st.busy_until = end
            heard = st.heard
            while heard and heard[0][1] <= horizon:
                heard.popleft()
            heard.append((start, end, tx_id))

    def _clear_at(self, node: int, start: float, end: float, tx_id: int) -> bool:
        for s, e, tid in self.stations[node].heard:
            if tid != tx_id and s < end and e > start:
                return False
        return True

    def _audience(self, node: int) -> list[int]:
        nbrs = self.world.neighbors(node)
        nbrs.append(node)
        return nbrs

    # -- contention ------------------------------------------------------

    def _contend(self, node: int) -> None:
        st = self.stations[node]
        if not st.queue:
            st.state = "idle"
            return
        now = self.engine.now
        head = st.queue[0]
        if head.hol_since is None:
            head.hol_since = now
        if st.slots is None:
            st.slots = self.rng.randint(0, st.cw)
        st.state = "contending"
        start = max(now, st.busy_until)
        st.countdown_from = start
        fire = start + self.t.t_difs + st.slots * self.t.backoff_slot
        st.timer = self.engine.at(fire, "timer", self._countdown_done, node, target=node)

    def _countdown_done(self, node: int) -> None:
        st = self.stations[node]
        st.timer = None
        # a frame starting at this very instant is not sensed yet (same-slot collision)
        if st.busy_until > st.countdown_from and st.busy_start < self.engine.now:
            # medium went busy during DIFS/backoff: freeze the counter
            idle = st.busy_start - st.countdown_from - self.t.t_difs
            if idle > 0:
                st.slots -= min(st.slots, int(idle / self.t.backoff_slot))
            start = max(st.busy_until, self.engine.now)
            st.countdown_from = start
            fire = start + self.t.t_difs + st.slots * self.t.backoff_slot
            st.timer = self.engine.at(fire, "timer", self._countdown_done, node, target=node)
            return
        st.slots = None
        head = st.queue[0]
        if head.next_hop == BROADCAST:
            self._send_broadcast(node, head)
        else:
            self._send_rts(node, head)

    # -- broadcast -------------------------------------------------------

    def _send_broadcast(self, node: int, entry: MacQueueEntry) -> None:
        st = self.stations[node]
        now = self.engine.now
        end = now + data_airtime(entry.packet.size, st.rate)
        tx_id = self._next_tx()
        audience = self._audience(node)
        self._occupy(audience, now, end, tx_id)
        st.state = "broadcast"
        receivers = [j for j in audience if j != node]
        self.engine.at(end, "packet-delivery", self._broadcast_end, node, entry, receivers,
                       now, tx_id, target=node)

    def _broadcast_end(self, node: int, entry: MacQueueEntry, receivers: list[int],
                       start: float, tx_id: int) -> None:
        st = self.stations[node]
        st.queue.popleft()
        now = self.engine.now
        got = [j for j in receivers if self._clear_at(j, start, now, tx_id)]
        self.collisions += len(receivers) - len(got)
        st.cw = self.t.cw_min
        st.state = "idle"
        self._contend(node)
        for j in got:
            self.listener.mac_receive(j, node, entry.packet, self.world.rx_power(node, j))

    # -- unicast ---------------------------------------------------------

    def _send_rts(self, node: int, entry: MacQueueEntry) -> None:
        st = self.stations[node]
        now = self.engine.now
        tx_id = self._next_tx()
        end = now + self.t.t_rts
        self._occupy(self._audience(node), now, end, tx_id)
        st.state = "rts"
        self.engine.at(end, "timer", self._rts_end, node, entry, now, tx_id, target=node)

    def _rts_end(self, node: int, entry: MacQueueEntry, start: float, tx_id: int) -> None:
        now = self.engine.now
        dst = entry.next_hop
        t = self.t
        # an overlapping frame at either end spoils the handshake
        ok = (self.world.connected(node, dst) and self._clear_at(dst, start, now, tx_id)
              and self._clear_at(node, start, now, tx_id))
        st = self.stations[node]
        if not ok:
            self.collisions += 1
            entry.retries += 1
            st.cw = min(2 * (st.cw + 1) - 1, t.cw_max)
            st.state = "wait-cts"
            timeout = t.t_sifs + t.t_cts
            self.engine.at(now + timeout, "timer", self._cts_timeout, node, entry, target=node)
            return
        self.listener.mac_rts_heard(dst, node, self.world.rx_power(node, dst))
        self.listener.mac_access_sample(node, sample_access_time(entry, start))
        rate = min(st.rate, self.stations[dst].rate)
        end = (now + t.t_sifs + t.t_cts + t.t_sifs + data_airtime(entry.packet.size, rate)
               + t.t_sifs + t.t_ack)
        reserve = set(self._audience(node))
        reserve.update(self._audience(dst))
        self._occupy(sorted(reserve), now, end, self._next_tx())
        st.state = "exchange"
        if self.exchange_log is not None:
            self.exchange_log.append((node, dst, start, end))
        self.engine.at(end, "packet-delivery", self._exchange_end, node, entry, target=node)

    def _cts_timeout(self, node: int, entry: MacQueueEntry) -> None:
        st = self.stations[node]
        st.state = "idle"
        if entry.retries >= self.t.max_retries:
            st.queue.popleft()
            st.cw = self.t.cw_min
            self.retry_drops += 1
            self.listener.mac_link_failure(node, entry)
            if st.state == "idle":
                self._contend(node)
            return
        self._contend(node)

    def _exchange_end(self, node: int, entry: MacQueueEntry) -> None:
        st = self.stations[node]
        st.queue.popleft()
        now = self.engine.now
        st.cw = self.t.cw_min
        st.state = "idle"
        self.delivered += 1
        self.listener.mac_exchange_done(node, entry, now - entry.hol_since, now - entry.enqueued_at)
        if st.state == "idle":
            self._contend(node)
        self.listener.mac_receive(entry.next_hop, node, entry.packet,
                                  self.world.rx_power(node, entry.next_hop))


def sample_access_time(entry: MacQueueEntry, rts_start: SimTime) -> float:
    """Time from reaching head-of-line to the start of the successful RTS."""
    if entry.hol_since is None or rts_start < entry.hol_since:
        raise ValueError("RTS cannot start before the packet reached head-of-line")
    return rts_start - entry.hol_since
