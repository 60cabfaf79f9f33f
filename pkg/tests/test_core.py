import itertools
from dataclasses import replace

import numpy as np
import pytest

from vofc.core import (BINARY, RELAXED, CostBreakdown, build_rt, build_uc, build_ucr,
                       combine_forecasts, solve_rt, solve_uc, two_stage_cost, uc_solution)
from vofc.grid import GeneratorParams, Grid, GridError, Line, Node, ScenarioDay
from vofc.solver import solve_lp, solve_milp

from conftest import one_node_grid, random_day, random_grid


def single(v):
    return np.array([[v]], float)


def test_one_node_dispatch_cost():
    grid = one_node_grid()
    sol = solve_uc(grid, single(50), single(0), 1)
    assert sol.p[0, 0] == pytest.approx(50)
    assert sol.objective == pytest.approx(500)


def test_capacity_forced_shedding():
    grid = one_node_grid()
    sol = solve_uc(grid, single(150), single(0), 1)
    assert sol.p[0, 0] == pytest.approx(100)
    assert sol.shed[0, 0] == pytest.approx(50)
    assert sol.objective == pytest.approx(1_251_000)


def test_single_balancing_action():
    grid = one_node_grid()
    uc = solve_uc(grid, single(50), single(0), 1)
    model, sol = solve_rt(grid, uc, single(60), single(0), 1)
    assert sol.x[model.var_blocks["rup"]][0, 0] == pytest.approx(10)
    assert sol.objective == pytest.approx(150)


def test_two_stage_composition():
    grid = one_node_grid()
    day = ScenarioDay(1, single(50)[None], single(0)[None], single(60), single(0))
    c = two_stage_cost(grid, [1.0], day)
    assert c.total == pytest.approx(650)
    assert c.production == pytest.approx(500) and c.rt_up == pytest.approx(150)


def test_perfect_forecast_needs_no_redispatch(rng):
    grid = random_grid(rng)
    day = random_day(rng, grid, T=4, K=1, scale=0.6 * sum(g.pmax for g in grid.generators))
    perfect = ScenarioDay(1, day.actual_load[None], day.actual_wind[None], day.actual_load, day.actual_wind)
    c = two_stage_cost(grid, [1.0], perfect)
    # the schedule must serve the forecast without shedding or curtailment
    assert c.uc_shed == 0 and c.uc_curtail == 0
    assert c.rt_total == pytest.approx(0.0, abs=1e-6)
    assert c.total == pytest.approx(c.uc_total)


def test_combine_forecasts():
    fl = np.zeros((2, 1, 1))
    fl[0], fl[1] = 100, 50
    day = ScenarioDay(1, fl, np.zeros_like(fl), np.zeros((1, 1)), np.zeros((1, 1)))
    L, W = combine_forecasts([0.5, 0.5], day)
    assert L[0, 0] == 75
    L, _ = combine_forecasts([1.0, 0.0], day)
    assert np.array_equal(L, fl[0])
    with pytest.raises(ValueError):
        combine_forecasts([1.0], day)
    with pytest.raises(ValueError):
        combine_forecasts([0.7, 0.7], day)


def enumerate_uc(grid, load, wind, T):
    """Best objective over all commitment patterns, LP dispatch for each."""
    base = build_uc(grid, load, wind, T)
    u = base.var_blocks["u"].ravel()
    best = np.inf
    for bits in itertools.product([0.0, 1.0], repeat=len(u)):
        m = base.copy()
        m._int = [False] * m.num_vars
        m.set_bounds(u, np.array(bits), np.array(bits))
        sol = solve_lp(m)
        if sol.ok:
            best = min(best, sol.objective)
    return best


def test_uc_matches_commitment_enumeration():
    rng = np.random.default_rng(11)
    for trial in range(4):
        grid = random_grid(rng, 3, 2, fractional=trial % 2 == 1)
        day = random_day(rng, grid, T=4, K=1)
        L, W = day.forecast_load[0], day.forecast_wind[0]
        sol = solve_milp(build_uc(grid, L, W, 4))
        assert sol.objective == pytest.approx(enumerate_uc(grid, L, W, 4), abs=1e-6)
        assert solve_lp(build_ucr(grid, L, W, 4)).objective <= sol.objective + 1e-6


def test_relaxation_is_tight_for_free_single_unit():
    gen = GeneratorParams("g", "1", 10.0, 0.0, 100.0, 100.0, 100.0)
    grid = Grid([Node("1")], [], [gen], "1")
    load = np.array([[30.0, 70.0, 20.0]])
    a = solve_milp(build_uc(grid, load, np.zeros_like(load), 3)).objective
    b = solve_lp(build_ucr(grid, load, np.zeros_like(load), 3)).objective
    assert a == pytest.approx(b)


def check_network(grid, model, x, prefix, injections, load):
    vb = model.var_blocks
    f = x[vb[prefix + "f"]] if grid.L else np.zeros((0, load.shape[1]))
    th = x[vb[prefix + "theta"]]
    shed, curt = x[vb[prefix + "shed"]], x[vb[prefix + "curt"]]
    inflow = np.zeros_like(load)
    np.add.at(inflow, grid.line_to, f)
    np.add.at(inflow, grid.line_from, -f)
    resid = injections + inflow - (load - shed + curt)
    assert np.abs(resid).max() <= 1e-6
    B = grid.line_array("susceptance")[:, None]
    assert np.abs(f - B * (th[grid.line_from] - th[grid.line_to])).max(initial=0) <= 1e-6
    assert np.abs(th[grid.ref_index]).max() <= 1e-9


def test_balance_flow_and_reference_invariants(rng):
    for _ in range(3):
        grid = random_grid(rng, 4, 3)
        day = random_day(rng, grid, T=5, K=1)
        L, W = day.forecast_load[0], day.forecast_wind[0]
        m = build_uc(grid, L, W, 5)
        sol = solve_milp(m)
        inj = np.zeros_like(L)
        np.add.at(inj, grid.gen_node, sol.x[m.var_blocks["p"]])
        check_network(grid, m, sol.x, "", inj, L)
        uc = uc_solution(m, sol)
        rt = build_rt(grid, uc, day.actual_load, day.actual_wind, 5)
        rs = solve_lp(rt)
        p_rt = uc.p + rs.x[rt.var_blocks["rup"]] - rs.x[rt.var_blocks["rdn"]]
        inj = np.zeros_like(L)
        np.add.at(inj, grid.gen_node, p_rt)
        check_network(grid, rt, rs.x, "rt_", inj, day.actual_load)


def test_commitment_logic_with_longer_windows():
    gens = [GeneratorParams("a", "1", 10, 20, 100, 50, 60, 800, 50, 30, 2, min_up=3, min_down=2),
            GeneratorParams("b", "1", 40, 0, 100, 100, 100, 0, 0, 30, 2)]
    grid = Grid([Node("1")], [], gens, "1")
    load = np.array([[10, 90, 10, 90, 10, 10, 90, 10.0]])
    m = build_uc(grid, load, np.zeros_like(load), 8)
    sol = uc_solution(m, solve_milp(m))
    u, y = sol.u, sol.y
    assert np.all(y >= u[:, 1:] - u[:, :-1] - 1e-9)
    for g, gen in enumerate(gens):
        for t in range(gen.min_up, 8):
            assert y[g, t - gen.min_up:t].sum() <= u[g, t] + 1e-9
        for t in range(gen.min_down, 8):
            assert y[g, t - gen.min_down:t].sum() <= 1 - u[g, t - gen.min_down] + 1e-9


def test_raising_shed_cost_never_lowers_uc_objective(rng):
    grid = random_grid(rng)
    day = random_day(rng, grid, T=3, K=1, scale=400.0)  # heavy load, shedding likely
    L, W = day.forecast_load[0], day.forecast_wind[0]
    last = -np.inf
    for c in (100.0, 1000.0, 10000.0):
        g2 = replace(grid, nodes=tuple(replace(n, shed_cost=c) for n in grid.nodes))
        obj = solve_uc(g2, L, W, 3).objective
        assert obj >= last - 1e-6
        last = obj


def test_relaxed_stage_one_bounds_binary_uc_component(rng):
    grid = random_grid(rng, fractional=True)
    day = random_day(rng, grid, T=4, K=2)
    for lam in ([1, 0], [0.3, 0.7]):
        a = two_stage_cost(grid, lam, day, RELAXED)
        b = two_stage_cost(grid, lam, day, BINARY)
        assert a.meta["uc_objective"] <= b.meta["uc_objective"] + 1e-6


def test_cost_breakdown_totals(rng):
    grid = random_grid(rng)
    day = random_day(rng, grid, T=4)
    c = two_stage_cost(grid, [0.5, 0.5], day)
    d = c.as_dict()
    assert d["total"] == pytest.approx(sum(d[k] for k in CostBreakdown.COMPONENTS))
    assert all(d[k] >= -1e-9 for k in CostBreakdown.COMPONENTS)
    assert c.uc_total == pytest.approx(c.meta["uc_objective"], rel=1e-9, abs=1e-6)
    assert c.rt_total == pytest.approx(c.meta["rt_objective"], rel=1e-9, abs=1e-6)


def test_shape_and_grid_errors():
    grid = one_node_grid()
    with pytest.raises(ValueError):
        build_uc(grid, np.zeros((2, 3)), np.zeros((2, 3)), 3)
    with pytest.raises(ValueError):
        build_uc(grid, np.zeros((1, 0)), np.zeros((1, 0)), 0)
    with pytest.raises(GridError):
        Grid([Node("1"), Node("1")], [], [], "1")
    with pytest.raises(GridError):
        Grid([Node("1")], [Line("1", "1", 1.0, 1.0)], [], "1")
    with pytest.raises(GridError):
        Grid([Node("1")], [], [GeneratorParams("g", "1", 1, 5, 2, 1, 1)], "1")
