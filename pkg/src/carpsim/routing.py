"""CARP and the simplified AOMDV baseline.

Both protocols flood RREQs and source-route data along the path an RREP
brings back. They differ in how routes are scored and admitted:

* AOMDV scores a route by hop count, installs every reply whose first hop
  differs from the ones already answered, and fails over between them.
* CARP accumulates node weights in the RREQ, keeps replies in an RREP
  table, probes the best-scoring candidate with ``2H`` DUMMY packets and
  admits it only when the measured mean delay is inside the flow's bound.
  A rejected candidate triggers a linear back-off before the next probe.
"""

from __future__ import annotations

import statistics
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

from .mac import MacQueueEntry
from .metrics import WeightAccumulator
from .packets import DataPacket, DummyPacket, RerrPacket, RrepPacket, RreqPacket

if TYPE_CHECKING:
    from .experiment import Simulation

_ENTRY_NEXT = {
    "unprobed": ("probing",),
    "probing": ("admitted", "rejected"),
    "admitted": (),
    "rejected": (),
}


class ProtocolError(RuntimeError):
    pass


@dataclass
class RouteEntry:
    destination: int
    path: tuple[int, ...]
    score: float
    installed_at: float = 0.0
    expires_at: float = float("inf")

    def __post_init__(self):
        if len(set(self.path)) != len(self.path):
            raise ProtocolError(f"route {self.path} repeats a node")
        if not (self.score > 0 and self.score != float("inf")):
            raise ProtocolError(f"route score must be finite and positive, got {self.score!r}")

    @property
    def next_hop(self) -> int:
        return self.path[1]

    @property
    def hop_count(self) -> int:
        return len(self.path) - 1


@dataclass
class RrepTableEntry:
    path: tuple[int, ...]
    route_total_weight: float
    received_at: float
    state: str = "unprobed"
    d_avg: Optional[float] = None
    probe_id: Optional[int] = None
    route_score: Optional[float] = None

    @property
    def score(self) -> float:
        if self.route_score is not None:
            return self.route_score
        return self.route_total_weight

    @property
    def hop_count(self) -> int:
        return len(self.path) - 1

    def advance(self, state: str) -> None:
        if state not in _ENTRY_NEXT[self.state]:
            raise ProtocolError(f"RREP table entry cannot go from {self.state} to {state}")
        self.state = state


@dataclass(frozen=True)
class Decision:
    admitted: bool
    wait: float = 0.0


def admit_or_backoff(d_avg: float, delay_bound: float, rejections: int,
                     quantum: float) -> Decision:
    """Admit a probed route, or report how long to back off.

    ``rejections`` counts earlier rejections for this discovery; the wait
    grows linearly with the total including this one.
    """
    if d_avg <= delay_bound:
        return Decision(True)
    return Decision(False, (rejections + 1) * quantum)


def _selection_key(c):
    return (-c.score, c.hop_count, c.path)


def select_route(candidates: Iterable):
    """Highest score wins; ties go to fewer hops, then the smaller path."""
    ranked = sorted(candidates, key=_selection_key)
    if not ranked:
        raise ProtocolError("no candidate route to select from")
    return ranked[0]


def has_link(path: tuple[int, ...], link: tuple[int, int]) -> bool:
    a, b = link
    return any(path[i] == a and path[i + 1] == b for i in range(len(path) - 1))


def first_hop_disjoint(paths: Iterable[tuple[int, ...]], limit: int) -> list[tuple[int, ...]]:
    """Greedily keep paths whose first hop has not been taken yet."""
    taken: set[int] = set()
    chosen = []
    for p in paths:
        if len(chosen) >= limit:
            break
        if p[1] in taken:
            continue
        taken.add(p[1])
        chosen.append(p)
    return chosen


@dataclass
class FlowState:
    """Source-side state for one destination."""

    destination: int
    flow: int
    pending: deque = field(default_factory=deque)
    discovering: bool = False
    attempts: int = 0
    rreq_id: Optional[tuple[int, int]] = None
    discovery_timer: object = None
    routes: list[RouteEntry] = field(default_factory=list)
    active: Optional[RouteEntry] = None
    rrep_table: dict[tuple[int, ...], RrepTableEntry] = field(default_factory=dict)
    probing: Optional[RrepTableEntry] = None
    probe_timer: object = None
    next_probe: object = None
    rejections: int = 0
    exhausted: int = 0  # RREP tables used up since the last admitted route


@dataclass
class _Seen:
    best: float
    forwards: int


@dataclass
class _ReplySession:
    # (path, accumulated weight, selection score)
    copies: list[tuple[tuple[int, ...], float, float]] = field(default_factory=list)
    answered: list[tuple[int, ...]] = field(default_factory=list)
    closed: bool = False


@dataclass
class _ProbeSession:
    path: tuple[int, ...]
    flow: int
    total: int
    rreq_weight: Optional[float]
    delays: list[float] = field(default_factory=list)
    done: bool = False


class Agent:
    """Per-node protocol logic shared by both protocols."""

    protocol = "base"

    def __init__(self, node: int, net: "Simulation"):
        self.node = node
        self.net = net
        self.cfg = net.cfg
        self.flows: dict[int, FlowState] = {}
        self.seen: dict[tuple[int, int], _Seen] = {}
        self.sessions: dict[tuple[int, int], _ReplySession] = {}
        self._rreq_seq = 0

    # -- source side ---------------------------------------------------

    def flow_state(self, destination: int, flow: int = -1) -> FlowState:
        fs = self.flows.get(destination)
        if fs is None:
            fs = self.flows[destination] = FlowState(destination, flow)
        return fs

    def send(self, pkt: DataPacket) -> None:
        fs = self.flow_state(pkt.destination, pkt.flow)
        route = self.current_route(fs)
        if route is not None:
            self._transmit(pkt, route)
            return
        self._buffer(fs, pkt)
        if not self._busy(fs):
            self._search(fs)

    def _search(self, fs: FlowState) -> None:
        self.originate_rreq(fs)

    def _busy(self, fs: FlowState) -> bool:
        return fs.discovering

    def _buffer(self, fs: FlowState, pkt: DataPacket) -> None:
        if len(fs.pending) >= self.cfg.pending_capacity:
            self.net.drop_data(fs.pending.popleft(), "pending-overflow")
        fs.pending.append(pkt)

    def _transmit(self, pkt: DataPacket, route: RouteEntry) -> None:
        pkt.path = route.path
        pkt.index = 0
        route.expires_at = self.net.now + self.cfg.route_timeout
        self.net.unicast(self.node, route.next_hop, pkt)

    def _flush(self, fs: FlowState) -> None:
        while fs.pending and fs.active is not None:
            self._transmit(fs.pending.popleft(), fs.active)

    def current_route(self, fs: FlowState) -> Optional[RouteEntry]:
        now = self.net.now
        fs.routes = [r for r in fs.routes if r.expires_at > now]
        if fs.active is not None and fs.active not in fs.routes:
            fs.active = None
        if fs.active is None and fs.routes:
            fs.active = select_route(fs.routes)
        return fs.active

    def originate_rreq(self, fs: FlowState) -> None:
        if fs.destination == self.node:
            raise ProtocolError("flow destination equals its source")
        self._rreq_seq += 1
        fs.rreq_id = (self.node, self._rreq_seq)
        fs.discovering = True
        rreq = RreqPacket(fs.rreq_id, fs.flow, self.node, fs.destination, (self.node,),
                          self._initial_weight(), self.net.now, self._initial_cost())
        self.seen[fs.rreq_id] = _Seen(float("inf"), self.cfg.max_rreq_forwards)
        self.net.trace(self.node, "RREQ_TX", fs.flow, rreq.path)
        self.net.broadcast(self.node, rreq)
        wait = self.cfg.discovery_timeout * (2 ** fs.attempts)
        fs.discovery_timer = self.net.engine.after(wait, "timer", self._discovery_timeout, fs,
                                                   fs.rreq_id, target=self.node)

    def _initial_weight(self) -> Optional[float]:
        return None

    def _initial_cost(self) -> Optional[float]:
        return None

    def _discovery_timeout(self, fs: FlowState, rreq_id) -> None:
        if not fs.discovering or fs.rreq_id != rreq_id:
            return
        if fs.attempts < self.cfg.rreq_retries:
            fs.attempts += 1
            self.originate_rreq(fs)
            return
        self._discovery_failed(fs)

    def _discovery_done(self, fs: FlowState) -> None:
        fs.discovering = False
        fs.attempts = 0
        if fs.discovery_timer is not None:
            fs.discovery_timer.cancel()
            fs.discovery_timer = None

    def _discovery_failed(self, fs: FlowState) -> None:
        self._discovery_done(fs)
        while fs.pending:
            self.net.drop_data(fs.pending.popleft(), "no-route")

    def install(self, fs: FlowState, route: RouteEntry) -> None:
        if any(r.path == route.path for r in fs.routes):
            return
        fs.routes.append(route)
        self.net.trace(self.node, "ROUTE_INSTALL", fs.flow, route.path)
        self.net.route_installed(self.node, route)

    # -- packet dispatch -----------------------------------------------

    def receive(self, pkt, sender: int, p_r: float) -> None:
        kind = pkt.kind
        if kind == "DATA":
            self._on_data(pkt)
        elif kind == "RREQ":
            self._on_rreq(pkt, sender, p_r)
        elif kind == "RREP":
            self._on_rrep(pkt)
        elif kind == "RERR":
            self._on_rerr(pkt)
        elif kind == "DUMMY":
            self._on_dummy(pkt)
        else:
            raise ProtocolError(f"unknown packet kind {kind!r}")

    def _on_data(self, pkt: DataPacket) -> None:
        pkt.index += 1
        if pkt.path[pkt.index] != self.node:
            raise ProtocolError(f"data packet {pkt.uid} reached {self.node} off its path")
        if self.node == pkt.destination:
            self.net.deliver_data(pkt)
        else:
            self.net.unicast(self.node, pkt.next_hop, pkt)

    def _on_rreq(self, rreq: RreqPacket, prev: int, p_r: float) -> None:
        self.net.trace(self.node, "RREQ_RX", rreq.flow, rreq.path)
        if self.node in rreq.path:
            return
        if self.node == rreq.destination:
            self._at_destination(rreq, rreq.path + (self.node,), prev)
            return
        self._forward_rreq(rreq, prev, p_r)

    def _forward_rreq(self, rreq: RreqPacket, prev: int, p_r: float) -> None:
        raise NotImplementedError

    def _rebroadcast(self, rreq: RreqPacket, weight: Optional[float],
                     cost: Optional[float] = None) -> None:
        fwd = RreqPacket(rreq.rreq_id, rreq.flow, rreq.source, rreq.destination,
                         rreq.path + (self.node,), weight, rreq.sent_at, cost)
        self.net.trace(self.node, "RREQ_TX", fwd.flow, fwd.path)
        self.net.broadcast(self.node, fwd, jitter=True)

    def _at_destination(self, rreq: RreqPacket, path: tuple[int, ...], prev: int) -> None:
        raise NotImplementedError

    def reply_rrep(self, rreq_id: tuple[int, int], flow: int, path: tuple[int, ...],
                   route_total_weight: Optional[float] = None,
                   measured_d_avg: Optional[float] = None,
                   probe_id: Optional[int] = None,
                   route_score: Optional[float] = None) -> RrepPacket:
        rrep = RrepPacket(rreq_id, flow, path, len(path) - 1, route_total_weight,
                          measured_d_avg, probe_id, route_score)
        self.net.trace(self.node, "RREP_TX", flow, path)
        self.net.unicast(self.node, rrep.next_hop, rrep)
        return rrep

    def _on_rrep(self, rrep: RrepPacket) -> None:
        rrep.index -= 1
        if rrep.path[rrep.index] != self.node:
            raise ProtocolError(f"RREP reached {self.node} off its path {rrep.path}")
        self.net.trace(self.node, "RREP_RX", rrep.flow, rrep.path)
        if rrep.index > 0:
            self._relay_rrep(rrep)
            self.net.trace(self.node, "RREP_TX", rrep.flow, rrep.path)
            self.net.unicast(self.node, rrep.next_hop, rrep)
            return
        fs = self.flows.get(rrep.destination)
        if fs is None:
            return
        self._rrep_at_source(fs, rrep)

    def _relay_rrep(self, rrep: RrepPacket) -> None:
        pass

    def _rrep_at_source(self, fs: FlowState, rrep: RrepPacket) -> None:
        raise NotImplementedError

    def _on_dummy(self, pkt: DummyPacket) -> None:
        raise ProtocolError("DUMMY packet under a protocol that never probes")

    # -- route maintenance --------------------------------------------

    def handle_link_failure(self, next_hop: int, entries: list[MacQueueEntry]) -> None:
        """MAC gave up on ``next_hop``: drop what was headed there and report upstream."""
        link = (self.node, next_hop)
        notify: dict[int, tuple[tuple[int, ...], set]] = {}
        local = False
        for entry in entries:
            pkt = entry.packet
            kind = pkt.kind
            if kind == "DATA":
                self.net.drop_data(pkt, "link-failure")
            elif kind == "RREP":
                self.net.stats.rrep_dropped += 1
                continue
            elif kind != "DUMMY":
                continue
            if pkt.source == self.node:
                local = True
            else:
                prefix = pkt.path[:pkt.index + 1]
                prev = notify.get(pkt.source)
                if prev is None:
                    notify[pkt.source] = (prefix, {pkt.flow})
                else:
                    prev[1].add(pkt.flow)
        if local or any(has_link(r.path, link) for fs in self.flows.values() for r in fs.routes):
            self.broken_link(link)
        for src in sorted(notify):
            prefix, flows = notify[src]
            rerr = RerrPacket(link, src, prefix, len(prefix) - 1, tuple(sorted(flows)))
            self.net.trace(self.node, "RERR", -1 if len(flows) != 1 else next(iter(flows)),
                           prefix)
            self.net.unicast(self.node, rerr.next_hop, rerr)

    def _on_rerr(self, rerr: RerrPacket) -> None:
        rerr.index -= 1
        if rerr.index > 0:
            self.net.unicast(self.node, rerr.next_hop, rerr)
            return
        self.net.trace(self.node, "RERR", -1 if len(rerr.flows) != 1 else rerr.flows[0],
                       rerr.path)
        self.broken_link(rerr.broken)

    def broken_link(self, link: tuple[int, int]) -> None:
        for dest in sorted(self.flows):
            fs = self.flows[dest]
            fs.routes = [r for r in fs.routes if not has_link(r.path, link)]
            lost_active = fs.active is not None and has_link(fs.active.path, link)
            if lost_active:
                fs.active = None
            self._after_break(fs, link, lost_active)

    def _after_break(self, fs: FlowState, link: tuple[int, int], lost_active: bool) -> None:
        if lost_active and self.current_route(fs) is None and fs.pending and not self._busy(fs):
            self.originate_rreq(fs)
        elif fs.active is not None:
            self._flush(fs)

    def in_flight(self) -> int:
        return sum(len(fs.pending) for fs in self.flows.values())


class AomdvAgent(Agent):
    protocol = "aomdv"

    def _forward_rreq(self, rreq: RreqPacket, prev: int, p_r: float) -> None:
        if rreq.rreq_id in self.seen:
            return
        self.seen[rreq.rreq_id] = _Seen(0.0, 1)
        self._rebroadcast(rreq, None)

    def _at_destination(self, rreq: RreqPacket, path: tuple[int, ...], prev: int) -> None:
        session = self.sessions.setdefault(rreq.rreq_id, _ReplySession())
        if len(session.answered) >= self.cfg.max_replies:
            return
        if any(p[1] == path[1] or p == path for p in session.answered):
            return
        session.answered.append(path)
        self.reply_rrep(rreq.rreq_id, rreq.flow, path)

    def _rrep_at_source(self, fs: FlowState, rrep: RrepPacket) -> None:
        if fs.discovering and rrep.rreq_id == fs.rreq_id:
            self._discovery_done(fs)
        now = self.net.now
        route = RouteEntry(fs.destination, rrep.path, 1.0 / rrep.hop_count, now,
                           now + self.cfg.route_timeout)
        self.install(fs, route)
        if self.current_route(fs) is not None:
            self._flush(fs)


class CarpAgent(Agent):
    protocol = "carp"

    def __init__(self, node: int, net: "Simulation"):
        super().__init__(node, net)
        self.accumulators: dict[tuple, WeightAccumulator] = {}
        self.probes: dict[int, _ProbeSession] = {}
        self.cost_indices: list[tuple[tuple[int, int], tuple[int, ...], float]] = []

    def _initial_weight(self) -> Optional[float]:
        return 0.0

    def _initial_cost(self) -> Optional[float]:
        return 0.0 if self.cfg.route_metric == "inverse-cost" else None

    def _partial_score(self, weight: float, cost: Optional[float]) -> float:
        # larger is better under either metric
        return weight if cost is None else -cost

    def _busy(self, fs: FlowState) -> bool:
        return fs.discovering or fs.probing is not None or fs.next_probe is not None

    def _search(self, fs: FlowState) -> None:
        # untried RREP-table candidates are cheaper than a new flood
        if self._fresh_unprobed(fs):
            self._probe_next(fs)
        else:
            self.originate_rreq(fs)

    # -- RREQ weight accumulation ---------------------------------------

    def _forward_rreq(self, rreq: RreqPacket, prev: int, p_r: float) -> None:
        metrics = self.net.metrics[self.node]
        m = metrics.link_metrics(prev)
        if m.l_q < self.net.lq_floor:
            return
        nw = self.net.node_weight(self.node, prev, m)
        total = rreq.accumulated_weight + nw
        cost = None if rreq.accumulated_cost is None else rreq.accumulated_cost + 1.0 / nw
        partial = self._partial_score(total, cost)
        seen = self.seen.get(rreq.rreq_id)
        if seen is None:
            self.seen[rreq.rreq_id] = _Seen(partial, 1)
        elif seen.forwards < self.cfg.max_rreq_forwards and partial > seen.best:
            seen.best = partial
            seen.forwards += 1
        else:
            return
        path = rreq.path + (self.node,)
        self.accumulators[(rreq.rreq_id, path)] = WeightAccumulator(rreq.accumulated_weight, nw)
        self.net.weight_logged(rreq.rreq_id, path, nw)
        self._rebroadcast(rreq, total, cost)

    def _at_destination(self, rreq: RreqPacket, path: tuple[int, ...], prev: int) -> None:
        session = self.sessions.get(rreq.rreq_id)
        if session is None:
            session = self.sessions[rreq.rreq_id] = _ReplySession()
            self.net.engine.after(self.cfg.reply_window, "timer", self._close_replies, rreq,
                                  target=self.node)
        if session.closed or any(c[0] == path for c in session.copies):
            return
        session.copies.append((path, rreq.accumulated_weight, self._route_score(rreq, prev)))

    def _route_score(self, rreq: RreqPacket, prev: int) -> float:
        # the last hop has no forwarder, so its weight is taken at the destination
        arrival = self.net.metrics[self.node].weight(prev)
        if rreq.accumulated_cost is not None:
            return 1.0 / (rreq.accumulated_cost + 1.0 / arrival)
        return rreq.accumulated_weight if rreq.accumulated_weight > 0 else arrival

    def _close_replies(self, rreq: RreqPacket) -> None:
        session = self.sessions[rreq.rreq_id]
        session.closed = True
        ranked = sorted(session.copies, key=lambda c: (-c[2], len(c[0]), c[0]))
        by_path = {c[0]: c for c in session.copies}
        for path in first_hop_disjoint([c[0] for c in ranked], self.cfg.max_replies):
            session.answered.append(path)
            _, weight, score = by_path[path]
            self.reply_rrep(rreq.rreq_id, rreq.flow, path, weight, route_score=score)

    # -- RREP cost recovery ---------------------------------------------

    def _relay_rrep(self, rrep: RrepPacket) -> None:
        if rrep.probe_id is not None or rrep.route_total_weight is None:
            return
        acc = self.accumulators.get((rrep.rreq_id, rrep.path[:rrep.index + 1]))
        if acc is None:
            return
        cost = acc.cost_index(rrep.route_total_weight)
        self.cost_indices.append((rrep.rreq_id, rrep.path, cost))
        self.net.cost_recovered(self.node, rrep, acc, cost)

    def _rrep_at_source(self, fs: FlowState, rrep: RrepPacket) -> None:
        now = self.net.now
        if rrep.probe_id is None:
            if fs.discovering and rrep.rreq_id == fs.rreq_id:
                self._discovery_done(fs)
            if rrep.path not in fs.rrep_table:
                fs.rrep_table[rrep.path] = RrepTableEntry(rrep.path, rrep.route_total_weight, now,
                                                          route_score=rrep.route_score)
            if self.current_route(fs) is None and fs.probing is None and fs.next_probe is None:
                fs.next_probe = self.net.engine.after(self.cfg.rrep_wait, "timer",
                                                      self._probe_next, fs, target=self.node)
            return
        entry = fs.probing
        if entry is None or entry.probe_id != rrep.probe_id:
            return
        self._probe_finished(fs, entry, rrep.measured_d_avg)

    # -- DUMMY probing and admission --------------------------------------

    def _fresh_unprobed(self, fs: FlowState) -> list[RrepTableEntry]:
        horizon = self.net.now - self.cfg.route_timeout
        stale = [p for p, e in fs.rrep_table.items()
                 if e.received_at <= horizon and e.state != "admitted"]
        for p in stale:
            del fs.rrep_table[p]
        return [e for e in fs.rrep_table.values() if e.state == "unprobed"]

    def _probe_next(self, fs: FlowState) -> None:
        fs.next_probe = None
        if self.current_route(fs) is not None:
            self._flush(fs)
            return
        candidates = self._fresh_unprobed(fs)
        if not candidates:
            fs.rejections = 0
            fs.rrep_table.clear()
            if not fs.pending:
                return
            # an exhausted table fails this discovery round; retry like a timeout
            if fs.exhausted < self.cfg.rreq_retries:
                fs.exhausted += 1
                self.originate_rreq(fs)
            else:
                fs.exhausted = 0
                self._discovery_failed(fs)
            return
        self.probe_with_dummy(fs, select_route(candidates))

    def probe_with_dummy(self, fs: FlowState, entry: RrepTableEntry) -> int:
        entry.advance("probing")
        probe_id = self.net.new_probe_id()
        entry.probe_id = probe_id
        fs.probing = entry
        count = 2 * entry.hop_count
        self.net.probe_started(self.node, probe_id, entry.hop_count, count)
        gap = self.cfg.dummy_interval
        self._send_dummy(fs, entry, probe_id, 0, count)
        for seq in range(1, count):
            self.net.engine.after(seq * gap, "timer", self._send_dummy, fs, entry, probe_id,
                                  seq, count, target=self.node)
        fs.probe_timer = self.net.engine.after((count - 1) * gap + self.cfg.probe_timeout,
                                               "timer", self._probe_timeout, fs, entry,
                                               target=self.node)
        return probe_id

    def _send_dummy(self, fs: FlowState, entry: RrepTableEntry, probe_id: int, seq: int,
                    count: int) -> None:
        if fs.probing is not entry or entry.probe_id != probe_id:
            return
        pkt = DummyPacket(probe_id, fs.flow, self.node, fs.destination, self.net.now,
                          self.cfg.packet_size, seq, count, entry.path, 0)
        self.net.trace(self.node, "DUMMY_TX", fs.flow, entry.path)
        self.net.unicast(self.node, entry.path[1], pkt)

    def _probe_timeout(self, fs: FlowState, entry: RrepTableEntry) -> None:
        fs.probe_timer = None
        if fs.probing is entry:
            self._probe_finished(fs, entry, None)

    def _probe_finished(self, fs: FlowState, entry: RrepTableEntry,
                        d_avg: Optional[float]) -> None:
        fs.probing = None
        if fs.probe_timer is not None:
            fs.probe_timer.cancel()
            fs.probe_timer = None
        entry.d_avg = d_avg
        if d_avg is None:
            decision = Decision(False, (fs.rejections + 1) * self.cfg.backoff_quantum)
        else:
            decision = admit_or_backoff(d_avg, self.cfg.delay_bound, fs.rejections,
                                        self.cfg.backoff_quantum)
        if decision.admitted:
            entry.advance("admitted")
            fs.rejections = 0
            fs.exhausted = 0
            now = self.net.now
            self.install(fs, RouteEntry(fs.destination, entry.path, entry.score,
                                        now, now + self.cfg.route_timeout))
            fs.active = None
            self.current_route(fs)
            self._flush(fs)
            return
        entry.advance("rejected")
        fs.rejections += 1
        fs.next_probe = self.net.engine.after(decision.wait, "timer", self._probe_next, fs,
                                              target=self.node)

    def _on_dummy(self, pkt: DummyPacket) -> None:
        pkt.index += 1
        self.net.trace(self.node, "DUMMY_RX", pkt.flow, pkt.path)
        if self.node != pkt.destination:
            self.net.unicast(self.node, pkt.next_hop, pkt)
            return
        session = self.probes.get(pkt.probe_id)
        if session is None:
            session = self.probes[pkt.probe_id] = _ProbeSession(
                pkt.path, pkt.flow, pkt.total, self._weight_of(pkt.path))
            # allow for the DUMMYs still to be sent behind this one
            rest = (pkt.total - 1 - pkt.seq) * self.cfg.dummy_interval
            self.net.engine.after(rest + self.cfg.probe_timeout / 2, "timer",
                                  self._report_probe, pkt.probe_id, target=self.node)
        if session.done:
            return
        session.delays.append(self.net.now - pkt.created_at)
        if len(session.delays) == session.total:
            self._report_probe(pkt.probe_id)

    def _weight_of(self, path: tuple[int, ...]) -> Optional[float]:
        for session in self.sessions.values():
            for p, w, _ in session.copies:
                if p == path:
                    return w
        return None

    def _report_probe(self, probe_id: int) -> None:
        session = self.probes[probe_id]
        if session.done:
            return
        session.done = True
        d_avg = statistics.fmean(session.delays)
        self.reply_rrep((session.path[0], 0), session.flow, session.path, session.rreq_weight,
                        d_avg, probe_id)

    # -- maintenance --------------------------------------------------------

    def _after_break(self, fs: FlowState, link: tuple[int, int], lost_active: bool) -> None:
        for p in [p for p in fs.rrep_table if has_link(p, link)]:
            entry = fs.rrep_table.pop(p)
            if fs.probing is entry:
                self._probe_finished(fs, entry, None)
        if not lost_active:
            if fs.active is not None:
                self._flush(fs)
            return
        if self.current_route(fs) is not None:
            self._flush(fs)
            return
        if not self._busy(fs) and fs.pending:
            self._search(fs)
