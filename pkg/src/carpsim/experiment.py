"""Scenario orchestration: wiring, CBR traffic, run statistics and sweeps."""

from __future__ import annotations

import io
import itertools
import logging
import math
import os
import statistics
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .engine import ConfigError, Engine, ScenarioConfig, FILE_KEYS
from .mac import BROADCAST, Mac, MacQueueEntry, MacTimings, channel_occupation, data_airtime
from .metrics import LinkMetrics, NodeMetrics, NominalMetrics, node_weight
from .packets import DataPacket
from .routing import AomdvAgent, CarpAgent, RouteEntry
from .world import Position, RadioParams, World

log = logging.getLogger(__name__)

CSV_COLUMNS = ("protocol", "axis", "axis_value", "seed", "nodes", "pause", "sent", "received",
               "dropped", "ctrl_pkts", "throughput", "pdr", "ctrl_overhead", "avg_delay_s")
AXES = ("pause_time", "num_nodes")
_AXIS_ALIASES = {"pause": "pause_time", "pause_time": "pause_time",
                 "nodes": "num_nodes", "num_nodes": "num_nodes"}


class RunFailure(RuntimeError):
    def __init__(self, cfg: ScenarioConfig, cause: BaseException):
        super().__init__(f"run failed for protocol={cfg.protocol} nodes={cfg.num_nodes} "
                         f"pause={cfg.pause_time} seed={cfg.seed}: {cause}")
        self.cfg = cfg
        self.cause = cause


@dataclass(frozen=True)
class CbrFlow:
    flow_id: int
    source: int
    destination: int
    packet_size: int = 512
    interval: float = 0.25
    start: float = 1.0
    stop: float = 99.0

    def __post_init__(self):
        if self.source == self.destination:
            raise ConfigError(f"flow {self.flow_id}: source equals destination")
        if not self.interval > 0:
            raise ConfigError(f"flow {self.flow_id}: interval must be positive")

    def send_times(self) -> list[float]:
        if self.stop < self.start:
            return []
        n = math.floor((self.stop - self.start) / self.interval + 1e-9) + 1
        return [self.start + k * self.interval for k in range(n)]


@dataclass
class RunStats:
    sent_data: int = 0
    received_data: int = 0
    dropped_data: int = 0
    ctrl_packets: int = 0
    dummy_packets: int = 0
    rreq_packets: int = 0
    rrep_packets: int = 0
    rerr_packets: int = 0
    rrep_dropped: int = 0
    weight_bytes: int = 0
    in_flight: int = 0
    delays: list[float] = field(default_factory=list)
    drop_reasons: Counter = field(default_factory=Counter)

    def conserved(self) -> bool:
        return self.sent_data == self.received_data + self.dropped_data + self.in_flight


@dataclass(frozen=True)
class MetricRecord:
    throughput: int
    pdr: Optional[float]
    drop: int
    ctrl_overhead: Optional[float]
    avg_delay: Optional[float]


def compute_metrics(stats: RunStats) -> MetricRecord:
    pdr = stats.received_data / stats.sent_data if stats.sent_data else None
    overhead = stats.ctrl_packets / stats.received_data if stats.received_data else None
    delay = statistics.fmean(stats.delays) if stats.delays else None
    return MetricRecord(stats.received_data, pdr, stats.dropped_data, overhead, delay)


def make_flows(cfg: ScenarioConfig, rng) -> list[CbrFlow]:
    n = cfg.num_nodes
    if cfg.num_flows > n * (n - 1):
        raise ConfigError(f"{cfg.num_flows} flows need more than {n} nodes")
    pairs: list[tuple[int, int]] = []
    taken = set()
    while len(pairs) < cfg.num_flows:
        s, d = rng.randrange(n), rng.randrange(n)
        if s == d or (s, d) in taken:
            continue
        taken.add((s, d))
        pairs.append((s, d))
    stop = cfg.traffic_stop if cfg.traffic_stop is not None else cfg.sim_time - 1.0
    flows = []
    for k, (s, d) in enumerate(pairs):
        # staggered starts keep the first discoveries from colliding in lockstep
        start = cfg.traffic_start + rng.random() * cfg.cbr_interval
        flows.append(CbrFlow(k, s, d, cfg.packet_size, cfg.cbr_interval, start, stop))
    return flows


def _fmt(x: float) -> str:
    return format(x, ".9f")


class Simulation:
    """One scenario run: owns the engine, world, MAC, metric banks and agents."""

    def __init__(self, cfg: ScenarioConfig, *, trace: bool = False, metric_trace: bool = False,
                 placement_trace: bool = False, record: bool = False,
                 flows: Optional[Sequence[CbrFlow]] = None):
        self.cfg = cfg
        self.engine = Engine(cfg.seed)
        self.stats = RunStats()
        self.trace_lines: Optional[list[str]] = [] if trace else None
        self.metric_lines: Optional[list[str]] = [] if metric_trace else None
        self.placement_lines: Optional[list[str]] = [] if placement_trace else None
        self.record = record
        # invariant bookkeeping, filled only when record=True
        self.weight_log: dict[tuple, dict[tuple, float]] = {}
        self.cost_log: list[tuple[int, tuple, float, float, float]] = []
        self.install_log: list[tuple[int, tuple, bool]] = []
        self.probe_log: list[tuple[int, int, int, int]] = []
        self.exchange_log: Optional[list] = [] if record else None

        self.radio = RadioParams(cfg.tx_power, cfg.wavelength, range=cfg.tx_range)
        self.world = World(self.engine, cfg.num_nodes, cfg.area, cfg.speed, cfg.pause_time,
                           self.radio, on_waypoint=self._on_waypoint if placement_trace else None)
        if placement_trace:
            for i in range(cfg.num_nodes):
                self._on_waypoint(i, 0.0, self.world.position(i))
        if cfg.rate_classes:
            rate_rng = self.engine.rng_stream("topology", 1)
            rates = [rate_rng.choice(cfg.rate_classes) for _ in range(cfg.num_nodes)]
        else:
            rates = [cfg.channel_rate] * cfg.num_nodes
        self.rates = rates
        self._jitter_rng = self.engine.rng_stream("mac-backoff", 1)
        self.timings = MacTimings.from_config(cfg)
        self.c_occ = channel_occupation(self.timings)
        self.mac = Mac(self.engine, self.world, self.timings, rates, self,
                       cfg.queue_capacity, self.exchange_log)
        self.nominal = NominalMetrics.for_scenario(
            self.radio.edge_power, cfg.channel_rate, self.c_occ,
            data_airtime(cfg.packet_size, cfg.channel_rate))
        self.lq_floor = self.radio.edge_power
        self.metrics = [NodeMetrics(self.c_occ, 8 * cfg.packet_size, self.nominal,
                                    cfg.alpha_lq, cfg.alpha_mac) for _ in range(cfg.num_nodes)]
        agent_cls = CarpAgent if cfg.protocol == "carp" else AomdvAgent
        self.agents = [agent_cls(i, self) for i in range(cfg.num_nodes)]
        self._uid = itertools.count()
        self._probe_ids = itertools.count(1)
        self._received_uids: set[int] = set()
        self.flows = list(flows) if flows is not None else make_flows(
            cfg, self.engine.rng_stream("traffic"))
        for flow in self.flows:
            self.agents[flow.source].flow_state(flow.destination, flow.flow_id)
            times = flow.send_times()
            if times:
                self.engine.at(times[0], "traffic-tick", self._cbr_tick, flow, times, 0,
                               target=flow.source)

    @property
    def now(self) -> float:
        return self.engine.now

    # -- traffic -----------------------------------------------------------

    def _cbr_tick(self, flow: CbrFlow, times: list[float], k: int) -> None:
        pkt = DataPacket(next(self._uid), flow.flow_id, flow.source, flow.destination,
                         self.now, flow.packet_size)
        self.stats.sent_data += 1
        if k + 1 < len(times):
            self.engine.at(times[k + 1], "traffic-tick", self._cbr_tick, flow, times, k + 1,
                           target=flow.source)
        self.agents[flow.source].send(pkt)

    def run(self) -> RunStats:
        self.engine.run_until(self.cfg.sim_time)
        self.stats.in_flight = self.count_in_flight()
        return self.stats

    def count_in_flight(self) -> int:
        queued = sum(1 for i in range(self.cfg.num_nodes) for e in self.mac.queued(i)
                     if e.packet.kind == "DATA")
        return queued + sum(a.in_flight() for a in self.agents)

    # -- services used by agents -------------------------------------------

    def _count_ctrl(self, pkt) -> None:
        kind = pkt.kind
        if kind == "DATA":
            return
        self.stats.ctrl_packets += 1
        if kind == "DUMMY":
            self.stats.dummy_packets += 1
        elif kind == "RREQ":
            self.stats.rreq_packets += 1
        elif kind == "RREP":
            self.stats.rrep_packets += 1
        elif kind == "RERR":
            self.stats.rerr_packets += 1
        self.stats.weight_bytes += getattr(pkt, "weight_bytes", 0)

    def rreq_delay(self) -> float:
        if self.cfg.rreq_jitter <= 0:
            return 0.0
        return self._jitter_rng.uniform(0.0, self.cfg.rreq_jitter)

    def broadcast(self, node: int, pkt, jitter: bool = False) -> None:
        self._count_ctrl(pkt)
        delay = self.rreq_delay() if jitter else 0.0
        if delay > 0:
            self.engine.after(delay, "timer", self.mac.enqueue, node, pkt, BROADCAST,
                              target=node)
        else:
            self.mac.enqueue(node, pkt, BROADCAST)

    def unicast(self, node: int, next_hop: int, pkt) -> None:
        self._count_ctrl(pkt)
        self.mac.enqueue(node, pkt, next_hop)

    def deliver_data(self, pkt: DataPacket) -> None:
        if pkt.uid in self._received_uids:
            return
        self._received_uids.add(pkt.uid)
        self.stats.received_data += 1
        self.stats.delays.append(self.now - pkt.created_at)

    def drop_data(self, pkt: DataPacket, reason: str) -> None:
        self.stats.dropped_data += 1
        self.stats.drop_reasons[reason] += 1

    def new_probe_id(self) -> int:
        return next(self._probe_ids)

    def trace(self, node: int, event: str, flow: int, path) -> None:
        if self.trace_lines is not None:
            self.trace_lines.append(
                f"{_fmt(self.now)},{node},{event},{flow},{'-'.join(map(str, path))}")

    def node_weight(self, node: int, neighbor: int, m: LinkMetrics) -> float:
        nw = node_weight(m)
        if self.metric_lines is not None:
            self.metric_lines.append(
                f"{_fmt(self.now)},{node},{neighbor},{m.l_q!r},{m.oh_mac!r},{m.d_rate!r},"
                f"{m.d_avg!r},{nw!r}")
        return nw

    def weight_logged(self, rreq_id, path, nw: float) -> None:
        if self.record:
            self.weight_log.setdefault(rreq_id, {})[path] = nw

    def cost_recovered(self, node: int, rrep, acc, cost: float) -> None:
        if self.record:
            self.cost_log.append((node, rrep.path, rrep.route_total_weight, acc.own_nw, cost))

    def route_installed(self, node: int, route: RouteEntry) -> None:
        if self.record:
            p = route.path
            ok = all(self.world.connected(p[i], p[i + 1]) for i in range(len(p) - 1))
            self.install_log.append((node, p, ok))

    def probe_started(self, node: int, probe_id: int, hops: int, count: int) -> None:
        self.probe_log.append((node, probe_id, hops, count))

    # -- MAC listener ----------------------------------------------------------

    def mac_receive(self, node: int, sender: int, packet, p_r: float) -> None:
        if packet.kind == "RREQ":
            # broadcast frames carry no RTS; measure power on the frame itself
            self.metrics[node].update_link_quality(sender, p_r, self.now)
        self.agents[node].receive(packet, sender, p_r)

    def mac_rts_heard(self, node: int, sender: int, p_r: float) -> None:
        self.metrics[node].update_link_quality(sender, p_r, self.now)

    def mac_access_sample(self, node: int, t_acc: float) -> None:
        self.metrics[node].record_access_time(t_acc)

    def mac_exchange_done(self, node: int, entry: MacQueueEntry, c_delay: float,
                          sojourn: float) -> None:
        if entry.packet.kind in ("DATA", "DUMMY"):
            self.metrics[node].record_exchange(entry.next_hop, c_delay, sojourn, self.now)

    def mac_link_failure(self, node: int, entry: MacQueueEntry) -> None:
        hop = entry.next_hop
        stranded = self.mac.purge(node, lambda e: e.next_hop == hop)
        self.agents[node].handle_link_failure(hop, [entry] + stranded)

    def mac_overflow(self, node: int, packet) -> None:
        if packet.kind == "DATA":
            self.drop_data(packet, "queue-overflow")

    def _on_waypoint(self, node: int, t: float, pos: Position) -> None:
        self.placement_lines.append(f"{node},{_fmt(t)},{pos.x:.6f},{pos.y:.6f}")


# -- single runs and sweeps ----------------------------------------------------

@dataclass
class RunResult:
    cfg: ScenarioConfig
    stats: RunStats
    metrics: MetricRecord
    trace: Optional[list[str]] = None
    metric_trace: Optional[list[str]] = None
    placement: Optional[list[str]] = None


def run_scenario(cfg: ScenarioConfig, *, trace: bool = False, metric_trace: bool = False,
                 placement_trace: bool = False) -> RunResult:
    try:
        sim = Simulation(cfg, trace=trace, metric_trace=metric_trace,
                         placement_trace=placement_trace)
        stats = sim.run()
    except ConfigError:
        raise
    except Exception as exc:
        raise RunFailure(cfg, exc) from exc
    return RunResult(cfg, stats, compute_metrics(stats), sim.trace_lines, sim.metric_lines,
                     sim.placement_lines)


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple
    seeds: tuple[int, ...]
    protocols: tuple[str, ...] = ("carp", "aomdv")

    def __post_init__(self):
        axis = _AXIS_ALIASES.get(self.axis)
        if axis is None:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "axis", axis)
        if not (self.values and self.seeds and self.protocols):
            raise ConfigError("sweep needs at least one value, seed and protocol")

    def configs(self, base: ScenarioConfig) -> list[ScenarioConfig]:
        out = []
        for protocol in self.protocols:
            for value in self.values:
                for seed in self.seeds:
                    out.append(base.replace(protocol=protocol, seed=seed,
                                            **{self.axis: type(getattr(base, self.axis))(value)}))
        return out


def _run_row(args) -> dict[str, Any]:
    cfg, axis = args
    res = run_scenario(cfg)
    return result_row(res, axis)


def result_row(res: RunResult, axis: str) -> dict[str, Any]:
    cfg, s, m = res.cfg, res.stats, res.metrics
    return {
        "protocol": cfg.protocol, "axis": axis, "axis_value": getattr(cfg, axis),
        "seed": cfg.seed, "nodes": cfg.num_nodes, "pause": cfg.pause_time,
        "sent": s.sent_data, "received": s.received_data, "dropped": s.dropped_data,
        "ctrl_pkts": s.ctrl_packets, "throughput": m.throughput, "pdr": m.pdr,
        "ctrl_overhead": m.ctrl_overhead, "avg_delay_s": m.avg_delay,
    }


def _mean(values):
    present = [v for v in values if v is not None]
    return statistics.fmean(present) if present else None


def mean_rows(rows: list[dict[str, Any]]) -> list[dict[str, Any]]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["protocol"], r["axis_value"]), []).append(r)
    out = []
    for (protocol, value), members in groups.items():
        first = members[0]
        row = {"protocol": protocol, "axis": first["axis"], "axis_value": value,
               "seed": "mean", "nodes": first["nodes"], "pause": first["pause"]}
        for col in CSV_COLUMNS[6:]:
            row[col] = _mean([m[col] for m in members])
        out.append(row)
    return out


def run_sweep(spec: SweepSpec, base: ScenarioConfig, jobs: int = 1) -> list[dict[str, Any]]:
    """Per-seed rows followed, per (protocol, axis value), by a mean row.

    Rows are ordered by (protocol, axis value, seed) regardless of ``jobs``.
    """
    configs = spec.configs(base)
    work = [(cfg, spec.axis) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_row, work))
    else:
        rows = []
        for item in work:
            log.info("run %s %s=%s seed=%s", item[0].protocol, spec.axis,
                     getattr(item[0], spec.axis), item[0].seed)
            rows.append(_run_row(item))
    means = {(r["protocol"], r["axis_value"]): r for r in mean_rows(rows)}
    ordered = []
    for key, group in itertools.groupby(rows, key=lambda r: (r["protocol"], r["axis_value"])):
        ordered.extend(group)
        ordered.append(means[key])
    return ordered


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return format(value, ".9g")
    return str(value)


def format_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_cell(r[c]) for c in CSV_COLUMNS) + "\n")
    return buf.getvalue()


def write_csv(path: str, rows: list[dict[str, Any]]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(rows))


def read_csv(path: str) -> list[dict[str, str]]:
    import csv
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def describe_config(cfg: ScenarioConfig) -> str:
    """The scenario in config-file form, one ``key = value`` per line."""
    lines = []
    for key, attr in FILE_KEYS.items():
        lines.append(f"{key} = {getattr(cfg, attr)}")
    return "\n".join(lines) + "\n"


_PLOT_METRICS = (("throughput", "Throughput (packets)"), ("dropped", "Dropped packets"),
                 ("ctrl_overhead", "Control overhead"), ("pdr", "Delivery ratio"),
                 ("avg_delay_s", "Average delay (s)"))


def plot_script(axis: str, protocols: Sequence[str], csv_name: str = "results.csv") -> str:
    """Gnuplot commands drawing each metric against the sweep axis from the mean rows."""
    xlabel = "Pause time (s)" if axis == "pause_time" else "Number of nodes"
    lines = ["set datafile separator ','", "set terminal pngcairo size 640,480",
             "set key top left", f"set xlabel '{xlabel}'"]
    col = {c: i + 1 for i, c in enumerate(CSV_COLUMNS)}
    for metric, label in _PLOT_METRICS:
        lines.append(f"set output '{metric}.png'")
        lines.append(f"set ylabel '{label}'")
        series = []
        for p in protocols:
            series.append(
                f"'{csv_name}' using (strcol(1) eq '{p}' && strcol(4) eq 'mean' ? "
                f"${col['axis_value']} : 1/0):{col[metric]} with linespoints title '{p.upper()}'")
        lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


def write_outputs(out_dir: str, rows, axis: str, protocols, base: ScenarioConfig) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "results.csv"), rows)
    with open(os.path.join(out_dir, "scenario.cfg"), "w") as fh:
        fh.write(describe_config(base))
    with open(os.path.join(out_dir, "plot.gp"), "w") as fh:
        fh.write(plot_script(axis, protocols))


@dataclass(frozen=True)
class Comparison:
    axis_value: Any
    carp: dict[str, Any]
    aomdv: dict[str, Any]

    def better(self, metric: str, higher_is_better: bool) -> bool:
        a, b = self.carp[metric], self.aomdv[metric]
        if a is None or b is None:
            return False
        return a >= b if higher_is_better else a <= b


def paired_means(rows: list[dict[str, Any]]) -> list[Comparison]:
    means = {(r["protocol"], r["axis_value"]): r for r in rows if r["seed"] == "mean"}
    values = sorted({v for (_, v) in means})
    return [Comparison(v, means[("carp", v)], means[("aomdv", v)]) for v in values
            if ("carp", v) in means and ("aomdv", v) in means]
