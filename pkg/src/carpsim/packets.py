"""Network-layer packet types.

Data and DUMMY packets are source routed: they carry the full path and the
index of the node currently holding them. Control packets carry the path
they describe; RREP and RERR travel it backwards hop by hop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

# header sizes in bytes; the path costs 4 bytes per node id
RREQ_BASE = 44
RREP_BASE = 40
RERR_BASE = 32
ADDR_BYTES = 4
WEIGHT_BYTES = 8


@dataclass
class DataPacket:
    uid: int
    flow: int
    source: int
    destination: int
    created_at: float
    size: int
    path: tuple[int, ...] = ()
    index: int = 0

    kind = "DATA"

    @property
    def next_hop(self) -> int:
        return self.path[self.index + 1]


@dataclass
class DummyPacket:
    probe_id: int
    flow: int
    source: int
    destination: int
    created_at: float
    size: int
    seq: int
    total: int
    path: tuple[int, ...] = ()
    index: int = 0

    kind = "DUMMY"

    @property
    def next_hop(self) -> int:
        return self.path[self.index + 1]


@dataclass
class RreqPacket:
    rreq_id: tuple[int, int]
    flow: int
    source: int
    destination: int
    path: tuple[int, ...]
    accumulated_weight: Optional[float] = None  # None under AOMDV
    sent_at: float = 0.0
    accumulated_cost: Optional[float] = None

    kind = "RREQ"

    @property
    def hop_count(self) -> int:
        return len(self.path) - 1

    @property
    def weight_bytes(self) -> int:
        n = 0 if self.accumulated_weight is None else WEIGHT_BYTES
        return n if self.accumulated_cost is None else n + WEIGHT_BYTES

    @property
    def size(self) -> int:
        return RREQ_BASE + ADDR_BYTES * len(self.path) + self.weight_bytes


@dataclass
class RrepPacket:
    rreq_id: tuple[int, int]
    flow: int
    path: tuple[int, ...]  # source first, destination last
    index: int  # position of the node currently holding the packet
    route_total_weight: Optional[float] = None
    measured_d_avg: Optional[float] = None
    probe_id: Optional[int] = None
    route_score: Optional[float] = None

    kind = "RREP"

    @property
    def source(self) -> int:
        return self.path[0]

    @property
    def destination(self) -> int:
        return self.path[-1]

    @property
    def hop_count(self) -> int:
        return len(self.path) - 1

    @property
    def next_hop(self) -> int:
        return self.path[self.index - 1]

    @property
    def weight_bytes(self) -> int:
        fields = (self.route_total_weight, self.measured_d_avg, self.route_score)
        return WEIGHT_BYTES * sum(1 for f in fields if f is not None)

    @property
    def size(self) -> int:
        return RREP_BASE + ADDR_BYTES * len(self.path) + self.weight_bytes


@dataclass
class RerrPacket:
    broken: tuple[int, int]
    source: int
    path: tuple[int, ...]  # from the source up to the reporting node
    index: int
    flows: tuple[int, ...] = field(default=())

    kind = "RERR"
    weight_bytes = 0

    @property
    def next_hop(self) -> int:
        return self.path[self.index - 1]

    @property
    def size(self) -> int:
        return RERR_BASE + ADDR_BYTES * len(self.path)
