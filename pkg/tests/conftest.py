import numpy as np
import pytest

from vofc.grid import GeneratorParams, Grid, Line, Node, ScenarioDay

# one "criterion N: PASS/FAIL ..." line per acceptance check, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def one_node_grid(cost=10.0, pmin=10.0, pmax=100.0, up_cost=15.0, ramp=20.0, shed=25000.0):
    gen = GeneratorParams("g", "1", cost, pmin, pmax, ramp, pmax, up_cost=up_cost, down_cost=1.0)
    return Grid([Node("1", shed, 50.0)], [], [gen], reference="1")


def random_grid(rng, n_nodes=3, n_gens=2, fractional=False):
    """Connected ring network with random generators.

    ``fractional`` picks data that tends to leave the relaxed commitment fractional:
    large minimum outputs, expensive start-ups and slow ramps.
    """
    nodes = [Node(str(i + 1), float(rng.uniform(500, 3000)), float(rng.uniform(5, 60)))
             for i in range(n_nodes)]
    lines = []
    for i in range(n_nodes - 1):
        lines.append(Line(str(i + 1), str(i + 2), float(rng.uniform(5, 15)), float(rng.uniform(40, 120)), f"l{i}"))
    if n_nodes > 2:
        lines.append(Line("1", str(n_nodes), float(rng.uniform(5, 15)), float(rng.uniform(40, 120)), "lc"))
    gens = []
    for g in range(n_gens):
        pmax = float(rng.uniform(60, 150))
        if fractional:
            pmin = float(rng.uniform(0.4, 0.8)) * pmax
            ramp = float(rng.uniform(0.1, 0.3)) * pmax
            sramp = float(rng.uniform(pmin, pmax))
            su = float(rng.uniform(500, 3000))
        else:
            pmin = float(rng.uniform(0.0, 0.4)) * pmax
            ramp = float(rng.uniform(0.3, 0.8)) * pmax
            sramp = float(rng.uniform(pmin, pmax))
            su = float(rng.uniform(0, 400))
        gens.append(GeneratorParams(
            f"g{g + 1}", str(int(rng.integers(1, n_nodes + 1))), float(rng.uniform(10, 50)),
            pmin, pmax, ramp, sramp, su, float(rng.uniform(0, 100)),
            float(rng.uniform(20, 80)), float(rng.uniform(1, 10))))
    return Grid(nodes, lines, gens, reference="1")


def random_day(rng, grid, T=4, K=2, day=1, scale=None):
    """Random day with wind at the last node, below a third of that node's demand."""
    N = grid.N
    cap = scale or sum(g.pmax for g in grid.generators)
    demand = rng.uniform(0.45, 0.8, (N, T)) * cap / N
    aw = np.zeros((N, T))
    aw[-1] = rng.uniform(0, 0.3, T) * demand[-1]
    fw = np.zeros((K, N, T))
    fw[:, -1] = np.clip(aw[-1] + rng.normal(0, 0.1, (K, T)) * demand[-1], 0, 0.33 * demand[-1])
    return ScenarioDay(day, demand[None] - fw, fw, demand - aw, aw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def two_bus_instance(D=2, seed=3):
    """Two nodes, one line, T=3; provider 1 unbiased and noisy, provider 2 biased and sharp."""
    nodes = [Node("a", 500.0, 20.0), Node("b", 500.0, 20.0)]
    lines = [Line("a", "b", 10.0, 60.0, "ab")]
    gens = [GeneratorParams("g1", "a", 20, 10, 80, 30, 40, 100, 20, 40, 5),
            GeneratorParams("g2", "b", 35, 5, 60, 40, 40, 50, 10, 60, 5)]
    grid = Grid(nodes, lines, gens, "a")
    rng = np.random.default_rng(seed)
    days = []
    for d in range(D):
        dem = np.array([[50, 60, 70], [30, 35, 40]], float)
        aw = np.zeros((2, 3))
        aw[1] = rng.uniform(10, 30, 3)
        fw = np.zeros((2, 2, 3))
        fw[0, 1] = aw[1] + rng.normal(0, 8, 3)
        fw[1, 1] = aw[1] + 10 + rng.normal(0, 2, 3)
        fw = np.clip(fw, 0, None)
        days.append(ScenarioDay(d + 1, dem[None] - fw, fw, dem - aw, aw))
    return grid, days
