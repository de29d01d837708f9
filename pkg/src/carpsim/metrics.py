"""Per-neighbor estimator bank and the node-weight arithmetic used by CARP.

The node weight of a link combines received power ``l_q``, effective data
rate ``d_rate``, MAC overhead ``oh_mac`` and average delay ``d_avg`` as
``(l_q * d_rate) / (oh_mac * d_avg)``. Larger is better. Values are kept in
raw SI units; only their ordering matters for route selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional


class MetricsNotWarm(LookupError):
    pass


class CostIndexError(ValueError):
    pass


class EwmaEstimator:
    """Exponentially weighted moving average; the first sample seeds it."""

    __slots__ = ("alpha", "value", "count")

    def __init__(self, alpha: float = 1.0):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
        self.alpha = alpha
        self.value: Optional[float] = None
        self.count = 0

    @property
    def warm(self) -> bool:
        return self.count > 0

    def update(self, sample: float) -> float:
        if self.value is None:
            self.value = sample
        else:
            # convex form: alpha = 1 yields the sample exactly
            self.value = self.alpha * sample + (1.0 - self.alpha) * self.value
        self.count += 1
        return self.value

    def __repr__(self) -> str:
        return f"EwmaEstimator(alpha={self.alpha}, value={self.value}, count={self.count})"


@dataclass
class LinkMetrics:
    l_q: Optional[float] = None
    oh_mac: Optional[float] = None
    d_rate: Optional[float] = None
    d_avg: Optional[float] = None
    freshness: float = 0.0

    FIELDS = ("l_q", "oh_mac", "d_rate", "d_avg")

    def missing(self) -> list[str]:
        return [f for f in self.FIELDS if getattr(self, f) is None]

    @property
    def warm(self) -> bool:
        return not self.missing()


def mac_overhead(c_occ: float, t_acc: float) -> float:
    if c_occ <= 0 or t_acc < 0:
        raise ValueError(f"need c_occ > 0 and t_acc >= 0, got {c_occ!r}, {t_acc!r}")
    return c_occ + t_acc


def effective_data_rate(d_size: float, c_delay: float) -> float:
    """Bits delivered per second of channel delay."""
    if c_delay <= 0:
        raise ZeroDivisionError(f"channel delay must be positive, got {c_delay!r}")
    if d_size <= 0:
        raise ValueError(f"data size must be positive, got {d_size!r}")
    return d_size / c_delay


def node_weight(m: LinkMetrics) -> float:
    missing = m.missing()
    if missing:
        raise MetricsNotWarm(f"metrics not warm: {', '.join(missing)}")
    for name in LinkMetrics.FIELDS:
        value = getattr(m, name)
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value!r}")
    return (m.l_q * m.d_rate) / (m.oh_mac * m.d_avg)


def recover_cost_index(route_total: float, prefix_sum: float) -> float:
    """Weight of a node plus everything downstream of it on the reply path."""
    if prefix_sum < 0:
        raise CostIndexError(f"negative prefix sum {prefix_sum!r}")
    # tolerate rounding when the prefix is the whole route
    if route_total < prefix_sum and not math.isclose(route_total, prefix_sum, rel_tol=1e-12):
        raise CostIndexError(
            f"route total {route_total!r} below stored prefix {prefix_sum!r}")
    return max(route_total - prefix_sum, 0.0)


@dataclass
class WeightAccumulator:
    prefix_sum: float
    own_nw: float

    def __post_init__(self):
        if self.prefix_sum < 0 or not self.own_nw > 0:
            raise ValueError("need prefix_sum >= 0 and own_nw > 0")

    @property
    def forwarded_sum(self) -> float:
        return self.prefix_sum + self.own_nw

    def cost_index(self, route_total: float) -> float:
        return recover_cost_index(route_total, self.prefix_sum)


@dataclass(frozen=True)
class NominalMetrics:
    """Stand-in values for estimators that have no samples yet."""

    l_q: float
    d_rate: float
    oh_mac: float
    d_avg: float

    @classmethod
    def for_scenario(cls, edge_power: float, rate: float, c_occ: float,
                     airtime: float) -> "NominalMetrics":
        return cls(l_q=edge_power, d_rate=rate, oh_mac=mac_overhead(c_occ, 0.0), d_avg=airtime)

    @property
    def weight(self) -> float:
        return node_weight(LinkMetrics(self.l_q, self.oh_mac, self.d_rate, self.d_avg))


class _NeighborEstimators:
    __slots__ = ("l_q", "c_delay", "d_avg", "updated")

    def __init__(self, alpha_lq: float, alpha_mac: float):
        self.l_q = EwmaEstimator(alpha_lq)
        self.c_delay = EwmaEstimator(alpha_mac)
        self.d_avg = EwmaEstimator(alpha_mac)
        self.updated = 0.0


class NodeMetrics:
    """Estimators owned by one node.

    Access contention ``t_acc`` is a property of the node's neighborhood and
    is tracked node-wide. Link quality, channel delay and sojourn delay are
    tracked per neighbor, with node-wide channel/sojourn estimates used when
    a neighbor has no samples of its own.
    """

    def __init__(self, c_occ: float, data_bits: float, nominal: NominalMetrics,
                 alpha_lq: float = 1.0, alpha_mac: float = 0.3):
        self.c_occ = c_occ
        self.data_bits = data_bits
        self.nominal = nominal
        self.alpha_lq = alpha_lq
        self.alpha_mac = alpha_mac
        self.t_acc = EwmaEstimator(alpha_mac)
        self.c_delay = EwmaEstimator(alpha_mac)
        self.d_avg = EwmaEstimator(alpha_mac)
        self.links: dict[int, _NeighborEstimators] = {}

    def _link(self, neighbor: int) -> _NeighborEstimators:
        est = self.links.get(neighbor)
        if est is None:
            est = self.links[neighbor] = _NeighborEstimators(self.alpha_lq, self.alpha_mac)
        return est

    def update_link_quality(self, neighbor: int, p_r: float, now: float = 0.0) -> bool:
        if not p_r > 0:
            return False
        est = self._link(neighbor)
        est.l_q.update(p_r)
        est.updated = now
        return True

    def record_access_time(self, t_acc: float) -> None:
        if t_acc < 0:
            raise ValueError(f"negative access time {t_acc!r}")
        self.t_acc.update(t_acc)

    def record_exchange(self, neighbor: int, c_delay: float, sojourn: float, now: float) -> None:
        est = self._link(neighbor)
        est.c_delay.update(c_delay)
        est.d_avg.update(sojourn)
        est.updated = now
        self.c_delay.update(c_delay)
        self.d_avg.update(sojourn)

    def measured(self, neighbor: int) -> LinkMetrics:
        """Raw estimator values; fields without samples are ``None``."""
        est = self.links.get(neighbor)
        m = LinkMetrics()
        if est is None:
            return m
        m.freshness = est.updated
        m.l_q = est.l_q.value
        if self.t_acc.warm:
            m.oh_mac = mac_overhead(self.c_occ, self.t_acc.value)
        if est.c_delay.warm:
            m.d_rate = effective_data_rate(self.data_bits, est.c_delay.value)
            m.d_avg = est.d_avg.value
        return m

    def link_metrics(self, neighbor: int) -> LinkMetrics:
        """Metrics for ``neighbor`` with cold fields filled in.

        A field without samples falls back to the node-wide estimate, then to
        the scenario's nominal value, so a node that has never transmitted
        contributes exactly the nominal weight.
        """
        m = self.measured(neighbor)
        nominal = self.nominal
        if m.l_q is None:
            m.l_q = nominal.l_q
        if m.oh_mac is None:
            m.oh_mac = (mac_overhead(self.c_occ, self.t_acc.value)
                        if self.t_acc.warm else nominal.oh_mac)
        if m.d_rate is None:
            m.d_rate = (effective_data_rate(self.data_bits, self.c_delay.value)
                        if self.c_delay.warm else nominal.d_rate)
        if m.d_avg is None:
            m.d_avg = self.d_avg.value if self.d_avg.warm else nominal.d_avg
        return m

    def weight(self, neighbor: int) -> float:
        return node_weight(self.link_metrics(neighbor))
