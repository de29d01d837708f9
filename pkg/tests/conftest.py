import pytest

from carpsim.engine import ScenarioConfig
from carpsim.experiment import CbrFlow, Simulation
from carpsim.world import Position


def static_sim(positions, flows=(), protocol="carp", sim_time=5.0, trace=True, **overrides):
    """Simulation over fixed node positions; nodes never leave their spots."""
    xs = [p[0] for p in positions]
    ys = [p[1] for p in positions]
    cfg = ScenarioConfig(num_nodes=len(positions), area_x=max(max(xs), 250.0) + 1.0,
                         area_y=max(max(ys), 1.0) + 1.0, pause_time=1e6, sim_time=sim_time,
                         protocol=protocol, num_flows=0, **overrides)
    sim = Simulation(cfg, trace=trace, record=True, flows=list(flows))
    for i, (x, y) in enumerate(positions):
        sim.world.place(i, Position(float(x), float(y)))
    return sim


def cbr(flow_id, src, dst, start=0.5, stop=2.0, interval=0.25):
    return CbrFlow(flow_id, src, dst, 512, interval, start, stop)


@pytest.fixture
def make_static():
    return static_sim


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
