"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
The directional comparisons run full sweeps and take several minutes; when
one fails, the paired per-seed CSV is written under ``acceptance-output/``.
"""

import math
import os
import random
import time
from fractions import Fraction

import mpmath
import pytest

from carpsim.engine import ScenarioConfig
from carpsim.experiment import SweepSpec, format_csv, paired_means, run_scenario, run_sweep
from carpsim.mac import MacTimings, channel_occupation
from carpsim.metrics import (LinkMetrics, effective_data_rate, mac_overhead, node_weight,
                             recover_cost_index)
from carpsim.world import received_power

from conftest import ACCEPTANCE_LINES

OUT_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "acceptance-output")
N_RANDOM = 1000


def report(name, ok, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail
                                                                      else ""))
    print(ACCEPTANCE_LINES[-1])
    assert ok, f"{name}: {detail}"


def rel_err(got, exact):
    exact = Fraction(exact)
    return abs(Fraction(got) - exact) / exact


def positive_floats(rng, k):
    return [10 ** rng.uniform(-9, 9) for _ in range(k)]


# -- formula oracles --------------------------------------------------------------

def test_received_power_oracle():
    t0 = time.perf_counter()
    mpmath.mp.dps = 50
    worst = 0.0
    for p_t in (0.1, 1, 10):
        for d in (1, 10, 100, 250):
            for lam in (0.0625, 0.125):
                exact = mpmath.mpf(p_t) * (mpmath.mpf(lam) / (4 * mpmath.pi * d)) ** 2
                worst = max(worst, float(abs(received_power(p_t, lam, d) - exact) / exact))
    edge = received_power(1.0, 0.125, 250.0)
    elapsed = time.perf_counter() - t0
    report("received power grid vs 50-digit oracle",
           worst <= 1e-12 and abs(edge - 1.58314e-9) <= 1e-14 and elapsed < 1.0,
           f"max rel err {worst:.2e}, edge {edge:.6e} W, {elapsed:.3f} s")


def test_channel_occupation_oracle():
    t0 = time.perf_counter()
    rng = random.Random(3)
    worst = Fraction(0)
    for _ in range(N_RANDOM):
        rts, cts, sifs = (10 ** rng.uniform(-7, -2) for _ in range(3))
        exact = Fraction(rts) + Fraction(cts) + 3 * Fraction(sifs)
        worst = max(worst, rel_err(channel_occupation(MacTimings(rts, cts, sifs)), exact))
    elapsed = time.perf_counter() - t0
    report("channel occupation vs exact rational sum", worst <= Fraction(1, 10**12)
           and elapsed < 1.0, f"max rel err {float(worst):.2e}, {elapsed:.3f} s")


def test_mac_overhead_oracle():
    t0 = time.perf_counter()
    rng = random.Random(4)
    worst = Fraction(0)
    for c_occ, t_acc in zip(positive_floats(rng, N_RANDOM), positive_floats(rng, N_RANDOM)):
        worst = max(worst, rel_err(mac_overhead(c_occ, t_acc), Fraction(c_occ) + Fraction(t_acc)))
    elapsed = time.perf_counter() - t0
    report("MAC overhead vs exact rational sum", worst <= Fraction(1, 10**12) and elapsed < 1.0,
           f"max rel err {float(worst):.2e}, {elapsed:.3f} s")


def test_effective_rate_oracle():
    t0 = time.perf_counter()
    rng = random.Random(5)
    worst = Fraction(0)
    for size, delay in zip(positive_floats(rng, N_RANDOM), positive_floats(rng, N_RANDOM)):
        worst = max(worst, rel_err(effective_data_rate(size, delay),
                                   Fraction(size) / Fraction(delay)))
    elapsed = time.perf_counter() - t0
    report("effective data rate vs exact quotient", worst <= Fraction(1, 10**12)
           and elapsed < 1.0, f"max rel err {float(worst):.2e}, {elapsed:.3f} s")


def test_node_weight_oracle():
    t0 = time.perf_counter()
    rng = random.Random(6)
    worst = Fraction(0)
    for _ in range(N_RANDOM):
        l_q, oh, rate, d_avg = positive_floats(rng, 4)
        exact = Fraction(l_q) * Fraction(rate) / (Fraction(oh) * Fraction(d_avg))
        worst = max(worst, rel_err(node_weight(LinkMetrics(l_q, oh, rate, d_avg)), exact))
    elapsed = time.perf_counter() - t0
    report("node weight vs exact rational formula", worst <= Fraction(1, 10**12)
           and elapsed < 1.0, f"max rel err {float(worst):.2e}, {elapsed:.3f} s")


def test_cost_recovery_telescoping():
    t0 = time.perf_counter()
    rng = random.Random(7)
    worst = 0.0
    last_ok = True
    for _ in range(N_RANDOM):
        hops = rng.randint(2, 10)
        weights = [10 ** rng.uniform(-3, 3) for _ in range(hops - 1)]
        prefixes, total = [], 0.0
        for w in weights:
            prefixes.append(total)
            total += w
        for k, prefix in enumerate(prefixes):
            suffix = math.fsum(weights[k:])
            worst = max(worst, abs(recover_cost_index(total, prefix) - suffix) / suffix)
        last = recover_cost_index(total, prefixes[-1])
        last_ok &= math.isclose(last, weights[-1], rel_tol=1e-9)
    elapsed = time.perf_counter() - t0
    report("cost recovery reproduces suffix sums", worst <= 1e-9 and last_ok and elapsed < 1.0,
           f"max rel err {worst:.2e}, last node equals own weight: {last_ok}, {elapsed:.3f} s")


# -- protocol invariants ------------------------------------------------------------

INVARIANT_SECONDS = []


@pytest.fixture(scope="module")
def full_run():
    t0 = time.perf_counter()
    res = run_scenario(ScenarioConfig(protocol="carp", seed=1), trace=True)
    INVARIANT_SECONDS.append(time.perf_counter() - t0)
    return res


def test_dummy_cardinality():
    from conftest import cbr, static_sim
    t0 = time.perf_counter()
    chain = [(0, 100), (200, 100), (400, 100), (600, 100), (800, 100), (1000, 100)]
    sim = static_sim(chain, [cbr(0, 0, 5, start=0.5, stop=3.0), cbr(1, 5, 1, start=0.7,
                                                                     stop=3.0)], sim_time=6.0)
    sim.run()
    bad = [p for p in sim.probe_log if p[3] != 2 * p[2]]
    originated = sum(1 for line in sim.trace_lines if line.split(",")[2] == "DUMMY_TX")
    # every DUMMY is relayed over each hop of its route
    per_hop = sum(count * hops for _, _, hops, count in sim.probe_log)
    INVARIANT_SECONDS.append(time.perf_counter() - t0)
    ok = (bool(sim.probe_log) and not bad
          and originated == sum(count for *_, count in sim.probe_log)
          and sim.stats.dummy_packets == per_hop)
    report("DUMMY packets per probe equal twice the hop count", ok,
           f"{len(sim.probe_log)} probes, hops {[p[2] for p in sim.probe_log]}, "
           f"{originated} DUMMYs sent")


def test_loop_freedom(full_run):
    looped = 0
    for line in full_run.trace:
        path = line.split(",")[4]
        if path:
            nodes = path.split("-")
            looped += len(nodes) != len(set(nodes))
    report("no repeated-node paths in a 50-node 100 s trace", looped == 0 and full_run.trace,
           f"{len(full_run.trace)} trace lines, {looped} looped")


def test_conservation(full_run):
    s = full_run.stats
    runs = [s]
    t0 = time.perf_counter()
    for protocol in ("carp", "aomdv"):
        for seed in (2,):
            runs.append(run_scenario(ScenarioConfig(protocol=protocol, seed=seed, num_nodes=20,
                                                    sim_time=20.0)).stats)
    INVARIANT_SECONDS.append(time.perf_counter() - t0)
    ok = all(r.sent_data == r.received_data + r.dropped_data + r.in_flight for r in runs)
    report("sent = received + dropped + in flight", ok,
           f"{len(runs)} runs, 50-node run: {s.sent_data} = {s.received_data} + "
           f"{s.dropped_data} + {s.in_flight}")


def _installs(trace):
    return [line for line in trace if line.split(",")[2] == "ROUTE_INSTALL"]


def test_power_scaling_invariance():
    t0 = time.perf_counter()
    base = ScenarioConfig(protocol="carp", seed=9, num_nodes=20, sim_time=30.0)
    a = _installs(run_scenario(base, trace=True).trace)
    b = _installs(run_scenario(base.replace(tx_power=10.0), trace=True).trace)
    INVARIANT_SECONDS.append(time.perf_counter() - t0)
    report("ten-fold transmit power leaves route installs unchanged", a == b and len(a) > 0,
           f"{len(a)} installs vs {len(b)}")


def test_determinism():
    t0 = time.perf_counter()
    cfg = ScenarioConfig(protocol="carp", seed=4, num_nodes=20, sim_time=30.0)
    outs = []
    for _ in range(2):
        res = run_scenario(cfg, trace=True)
        rows = [{"protocol": cfg.protocol, "axis": "pause_time", "axis_value": cfg.pause_time,
                 "seed": cfg.seed, "nodes": cfg.num_nodes, "pause": cfg.pause_time,
                 "sent": res.stats.sent_data, "received": res.stats.received_data,
                 "dropped": res.stats.dropped_data, "ctrl_pkts": res.stats.ctrl_packets,
                 "throughput": res.metrics.throughput, "pdr": res.metrics.pdr,
                 "ctrl_overhead": res.metrics.ctrl_overhead,
                 "avg_delay_s": res.metrics.avg_delay}]
        outs.append((format_csv(rows).encode(), "\n".join(res.trace).encode()))
    INVARIANT_SECONDS.append(time.perf_counter() - t0)
    report("identical config gives byte-identical CSV and trace", outs[0] == outs[1],
           f"trace {len(outs[0][1])} bytes")


def test_invariant_budget():
    total = sum(INVARIANT_SECONDS)
    report("protocol invariant suite under 10 s", total < 10.0, f"{total:.1f} s")


# -- directional comparisons --------------------------------------------------------

def _emit(name, rows):
    os.makedirs(OUT_DIR, exist_ok=True)
    path = os.path.join(OUT_DIR, f"{name}.csv")
    with open(path, "w") as fh:
        fh.write(format_csv(rows))
    return path


def _tally(comps, metric, higher):
    return sum(c.better(metric, higher) for c in comps)


def _table(comps, metrics):
    parts = []
    for c in comps:
        vals = " ".join(f"{m}={c.carp[m]:.3g}/{c.aomdv[m]:.3g}" for m in metrics)
        parts.append(f"{c.axis_value:g}: {vals}")
    return "; ".join(parts)


@pytest.fixture(scope="module")
def experiment_a():
    t0 = time.perf_counter()
    spec = SweepSpec("pause", (0.0, 10.0, 20.0, 30.0, 40.0), (1, 2, 3, 4, 5))
    rows = run_sweep(spec, ScenarioConfig())
    return rows, paired_means(rows), time.perf_counter() - t0


@pytest.fixture(scope="module")
def experiment_b():
    t0 = time.perf_counter()
    spec = SweepSpec("nodes", (25, 50, 75, 100), (1, 2, 3))
    rows = run_sweep(spec, ScenarioConfig())
    return rows, paired_means(rows), time.perf_counter() - t0


def test_pause_sweep_delivery_and_delay(experiment_a):
    rows, comps, secs = experiment_a
    wins = sum(c.better("pdr", True) and c.better("avg_delay_s", False) for c in comps)
    ok = wins >= 4
    detail = (f"{wins}/5 pauses, carp/aomdv {_table(comps, ('pdr', 'avg_delay_s'))}, "
              f"sweep {secs:.0f} s")
    if not ok:
        detail += f", paired CSV {_emit('pause_sweep', rows)}"
    report("pause sweep: CARP delivery >= AOMDV and delay <= AOMDV", ok, detail)


def test_pause_sweep_drops(experiment_a):
    rows, comps, _ = experiment_a
    wins = _tally(comps, "dropped", False)
    ok = wins >= 4
    detail = f"{wins}/5 pauses, carp/aomdv {_table(comps, ('dropped',))}"
    if not ok:
        detail += f", paired CSV {_emit('pause_sweep', rows)}"
    report("pause sweep: CARP drops <= AOMDV", ok, detail)


def test_pause_sweep_runtime(experiment_a):
    secs = experiment_a[2]
    report("pause sweep finishes within 5 minutes", secs <= 300.0, f"{secs:.0f} s")


def test_node_sweep_overhead_and_delivery(experiment_b):
    rows, comps, secs = experiment_b
    wins = sum(c.better("ctrl_overhead", False) and c.better("pdr", True) for c in comps)
    ok = wins >= 3
    detail = (f"{wins}/4 node counts, carp/aomdv {_table(comps, ('ctrl_overhead', 'pdr'))}, "
              f"sweep {secs:.0f} s")
    if not ok:
        detail += f", paired CSV {_emit('node_sweep', rows)}"
    report("node sweep: CARP overhead <= AOMDV and delivery >= AOMDV", ok, detail)
